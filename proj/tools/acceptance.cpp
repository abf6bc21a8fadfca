// Runs the acceptance criteria and prints one line per criterion.
// Exit status 0 when every selected criterion passes, 3 otherwise.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "opvi/acceptance.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    std::size_t parallelism = 1;
    std::string scratch;
    app.add_option("--only", only, "criterion numbers (comma separated or repeated)")
        ->check(CLI::Range(1, opvi::kCriteriaCount))
        ->delimiter(',');
    app.add_option("--parallelism", parallelism, "workers for independent seeds")->capture_default_str();
    app.add_option("--scratch", scratch, "directory for grid outputs");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    opvi::AcceptanceOptions opt;
    opt.only.insert(only.begin(), only.end());
    opt.parallelism = parallelism;
    opt.scratch = scratch;
    opt.on_result = [](const opvi::CriterionResult& r) { std::cout << opvi::format_result(r) << std::endl; };
    try {
        const auto results = opvi::run_acceptance(opt);
        std::size_t passed = 0;
        for (const auto& r : results)
            passed += r.passed ? 1 : 0;
        std::cout << passed << "/" << results.size() << " criteria passed\n";
        return passed == results.size() ? 0 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
