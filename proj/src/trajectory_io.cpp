#include "opvi/trajectory_io.hpp"

#include <fstream>
#include <string>

#include <json.hpp>

#include "opvi/errors.hpp"

namespace opvi {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "opvi-trajectory";
constexpr int kVersion = 1;

json config_to_json(const ModelConfig& c)
{
    return json{{"variant", std::string(to_string(c.variant))},
                {"n_agents", c.n_agents},
                {"n_steps", c.n_steps},
                {"interactions_per_step", c.interactions_per_step},
                {"mu_plus", c.mu_plus},
                {"mu_minus", c.mu_minus},
                {"mu_plus_L", c.mu_plus_L},
                {"mu_minus_L", c.mu_minus_L},
                {"feed_len", c.feed_len},
                {"xi", c.xi},
                {"graph_density", c.graph_density},
                {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j)
{
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.n_agents = j.at("n_agents").get<int>();
    c.n_steps = j.at("n_steps").get<int>();
    c.interactions_per_step = j.at("interactions_per_step").get<int>();
    c.mu_plus = j.at("mu_plus").get<double>();
    c.mu_minus = j.at("mu_minus").get<double>();
    c.mu_plus_L = j.at("mu_plus_L").get<double>();
    c.mu_minus_L = j.at("mu_minus_L").get<double>();
    c.feed_len = j.at("feed_len").get<int>();
    c.xi = j.at("xi").get<double>();
    c.graph_density = j.at("graph_density").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json latents_to_json(const LatentParams& p)
{
    json j{{"eps_plus", p.eps_plus}, {"eps_minus", p.eps_minus}};
    if (const auto* r = std::get_if<RolePayload>(&p.payload)) {
        j["eps_plus_L"] = r->eps_plus_L;
        j["eps_minus_L"] = r->eps_minus_L;
        std::vector<int> leader(r->leader.begin(), r->leader.end());
        j["leader"] = leader;
    } else if (const auto* a = std::get_if<AttentionPayload>(&p.payload)) {
        j["k_attend"] = a->k_attend;
    } else if (const auto* b = std::get_if<BackfirePayload>(&p.payload)) {
        j["beta"] = b->beta;
    } else if (const auto* g = std::get_if<RewirePayload>(&p.payload)) {
        j["gamma"] = g->gamma;
    }
    return j;
}

LatentParams latents_from_json(const json& j, Variant variant)
{
    LatentParams p;
    p.eps_plus = j.at("eps_plus").get<double>();
    p.eps_minus = j.at("eps_minus").get<double>();
    switch (variant) {
    case Variant::BCMS: {
        RolePayload r;
        r.eps_plus_L = j.at("eps_plus_L").get<double>();
        r.eps_minus_L = j.at("eps_minus_L").get<double>();
        for (const int flag : j.at("leader").get<std::vector<int>>())
            r.leader.push_back(flag != 0);
        p.payload = std::move(r);
        break;
    }
    case Variant::BCMI: p.payload = AttentionPayload{j.at("k_attend").get<int>()}; break;
    case Variant::BCMU: p.payload = BackfirePayload{j.at("beta").get<bool>()}; break;
    case Variant::BCMG: p.payload = RewirePayload{j.at("gamma").get<double>()}; break;
    default: break;
    }
    return p;
}

} // namespace

void write_trajectory(std::ostream& out, const Trajectory& traj, const std::optional<LatentParams>& truth)
{
    json header{{"format", kFormat},
                {"version", kVersion},
                {"config", config_to_json(traj.config)},
                {"x0", traj.x0}};
    if (!traj.initial_edges.empty()) {
        json edges = json::array();
        for (const Edge& e : traj.initial_edges)
            edges.push_back({e.a, e.b});
        header["edges"] = std::move(edges);
    }
    if (truth)
        header["latents"] = latents_to_json(*truth);
    out << header.dump() << '\n';

    for (const InteractionEvent& ev : traj.events) {
        const json rec{{"step", ev.step},
                       {"participants", ev.participants},
                       {"d", static_cast<int>(ev.d)},
                       {"s_plus", ev.outcome.s_plus},
                       {"s_minus", ev.outcome.s_minus},
                       {"s_rewire", ev.outcome.s_rewire}};
        out << rec.dump() << '\n';
    }
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj,
                      const std::optional<LatentParams>& truth)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot open '" + path.string() + "' for writing");
    write_trajectory(out, traj, truth);
    if (!out)
        throw Error("write failed for '" + path.string() + "'");
}

TrajectoryFile read_trajectory(std::istream& in)
{
    TrajectoryFile file;
    std::string line;
    std::size_t line_no = 0;
    try {
        if (!std::getline(in, line))
            throw Error("empty trajectory file");
        ++line_no;
        const json header = json::parse(line);
        if (header.at("format").get<std::string>() != kFormat)
            throw Error("not an opvi trajectory");
        if (header.at("version").get<int>() != kVersion)
            throw Error("unsupported trajectory version");
        Trajectory& traj = file.trajectory;
        traj.config = config_from_json(header.at("config"));
        traj.x0 = header.at("x0").get<std::vector<double>>();
        if (header.contains("edges"))
            for (const auto& e : header["edges"])
                traj.initial_edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
        if (header.contains("latents"))
            file.truth = latents_from_json(header["latents"], traj.config.variant);

        traj.events.reserve(traj.config.n_events());
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty())
                continue;
            const json rec = json::parse(line);
            InteractionEvent ev;
            ev.step = rec.at("step").get<int>();
            ev.participants = rec.at("participants").get<std::vector<int>>();
            ev.d = static_cast<Dynamics>(rec.at("d").get<int>());
            ev.outcome.s_plus = rec.at("s_plus").get<bool>();
            ev.outcome.s_minus = rec.at("s_minus").get<bool>();
            ev.outcome.s_rewire = rec.at("s_rewire").get<bool>();
            traj.events.push_back(std::move(ev));
        }
    } catch (const json::exception& e) {
        throw Error("trajectory line " + std::to_string(line_no) + ": " + e.what());
    }
    return file;
}

TrajectoryFile read_trajectory(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open '" + path.string() + "'");
    return read_trajectory(in);
}

} // namespace opvi
