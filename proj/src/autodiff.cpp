#include "opvi/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "opvi/errors.hpp"

namespace opvi::ad {

double sigmoid(double z) noexcept
{
    if (z >= 0.0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double log_sigmoid(double z) noexcept
{
    if (z >= 0.0)
        return -std::log1p(std::exp(-z));
    return z - std::log1p(std::exp(z));
}

// ---------------------------------------------------------------- Var

std::size_t Var::size() const { return tape_->value(*this).size(); }
std::span<const double> Var::value() const { return tape_->value(*this); }

double Var::scalar() const
{
    const auto v = tape_->value(*this);
    if (v.size() != 1)
        throw UnsupportedOperationError("scalar() on a Var of size " + std::to_string(v.size()));
    return v[0];
}

// ---------------------------------------------------------------- Arena

std::size_t Tape::Arena::allocate(std::size_t n)
{
    if (size_ + n > capacity_) {
        const std::size_t cap = std::max<std::size_t>({capacity_ * 2, size_ + n, 1024});
        auto fresh = std::make_unique<double[]>(cap);
        if (size_ > 0)
            std::memcpy(fresh.get(), data_.get(), size_ * sizeof(double));
        data_ = std::move(fresh);
        capacity_ = cap;
    }
    const std::size_t off = size_;
    size_ += n;
    return off;
}

// ---------------------------------------------------------------- Tape

void Tape::clear() noexcept
{
    nodes_.clear();
    values_.reset();
    adjoints_.reset();
    aux_.reset();
    index_.clear();
    adjoints_ready_ = false;
}

void Tape::check_owned(Var v) const
{
    if (v.tape_ != this)
        throw UnsupportedOperationError("Var belongs to a different tape");
    if (v.id_ >= nodes_.size())
        throw UnsupportedOperationError("stale Var (tape was cleared)");
}

const Tape::Node& Tape::node(Var v) const
{
    check_owned(v);
    return nodes_[v.id_];
}

double* Tape::val(std::uint32_t id) noexcept
{
    return values_.data() + nodes_[id].value_off;
}

const double* Tape::cval(std::uint32_t id) const noexcept
{
    const Node& n = nodes_[id];
    return n.ext != nullptr ? n.ext : values_.data() + n.value_off;
}

std::span<const double> Tape::value(Var v) const
{
    const Node& n = node(v);
    return {cval(v.id_), n.size};
}

std::uint32_t Tape::push(Op op, std::uint32_t a, std::uint32_t b, std::size_t size, bool needs_grad)
{
    Node n{};
    n.op = op;
    n.needs_grad = needs_grad;
    n.a = a;
    n.b = b;
    n.size = size;
    n.value_off = op == Op::constant_ref ? 0 : values_.allocate(size);
    n.ext = nullptr;
    nodes_.push_back(n);
    adjoints_ready_ = false;
    return static_cast<std::uint32_t>(nodes_.size() - 1);
}

Var Tape::input(std::span<const double> values)
{
    const auto id = push(Op::input, kNone, kNone, values.size(), true);
    std::copy(values.begin(), values.end(), val(id));
    return make(id);
}

Var Tape::constant(std::span<const double> values)
{
    const auto id = push(Op::constant, kNone, kNone, values.size(), false);
    std::copy(values.begin(), values.end(), val(id));
    return make(id);
}

Var Tape::constant_ref(std::span<const double> values)
{
    const auto id = push(Op::constant_ref, kNone, kNone, values.size(), false);
    nodes_[id].ext = values.data();
    return make(id);
}

Var Tape::binary(Op op, Var a, Var b)
{
    check_owned(a);
    check_owned(b);
    const std::size_t na = nodes_[a.id_].size;
    const std::size_t nb = nodes_[b.id_].size;
    if (na != nb && na != 1 && nb != 1)
        throw UnsupportedOperationError("shape mismatch: " + std::to_string(na) + " vs " + std::to_string(nb));
    const std::size_t n = std::max(na, nb);
    const bool grad = nodes_[a.id_].needs_grad || nodes_[b.id_].needs_grad;
    const auto id = push(op, a.id_, b.id_, n, grad);

    const double* pa = cval(a.id_);
    const double* pb = cval(b.id_);
    double* out = val(id);
    const std::size_t sa = na == 1 ? 0 : 1;
    const std::size_t sb = nb == 1 ? 0 : 1;
    switch (op) {
    case Op::add:
        for (std::size_t i = 0; i < n; ++i) out[i] = pa[i * sa] + pb[i * sb];
        break;
    case Op::sub:
        for (std::size_t i = 0; i < n; ++i) out[i] = pa[i * sa] - pb[i * sb];
        break;
    case Op::mul:
        for (std::size_t i = 0; i < n; ++i) out[i] = pa[i * sa] * pb[i * sb];
        break;
    case Op::div:
        for (std::size_t i = 0; i < n; ++i) out[i] = pa[i * sa] / pb[i * sb];
        break;
    case Op::min:
        for (std::size_t i = 0; i < n; ++i) out[i] = pa[i * sa] <= pb[i * sb] ? pa[i * sa] : pb[i * sb];
        break;
    case Op::max:
        for (std::size_t i = 0; i < n; ++i) out[i] = pa[i * sa] >= pb[i * sb] ? pa[i * sa] : pb[i * sb];
        break;
    default:
        throw UnsupportedOperationError("not a binary primitive");
    }
    return make(id);
}

Var Tape::unary(Op op, Var a)
{
    check_owned(a);
    const std::size_t n = nodes_[a.id_].size;
    const auto id = push(op, a.id_, kNone, n, nodes_[a.id_].needs_grad);
    const double* pa = cval(a.id_);
    double* out = val(id);
    switch (op) {
    case Op::neg:
        for (std::size_t i = 0; i < n; ++i) out[i] = -pa[i];
        break;
    case Op::exp:
        for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(pa[i]);
        break;
    case Op::log:
        for (std::size_t i = 0; i < n; ++i) out[i] = std::log(pa[i]);
        break;
    case Op::sigmoid:
        for (std::size_t i = 0; i < n; ++i) out[i] = ad::sigmoid(pa[i]);
        break;
    case Op::log_sigmoid: {
        // Cache sigmoid(-a), the derivative, while exp(-|a|) is at hand.
        const std::size_t aux = aux_.allocate(n);
        nodes_[id].aux_off = aux;
        nodes_[id].aux_len = n;
        pa = cval(a.id_);
        out = val(id);
        double* d = aux_.data() + aux;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = pa[i];
            const double e = std::exp(-std::abs(z));
            const double l = std::log1p(e);
            if (z >= 0.0) {
                out[i] = -l;
                d[i] = e / (1.0 + e);
            } else {
                out[i] = z - l;
                d[i] = 1.0 / (1.0 + e);
            }
        }
        break;
    }
    case Op::abs:
        for (std::size_t i = 0; i < n; ++i) out[i] = std::abs(pa[i]);
        break;
    default:
        throw UnsupportedOperationError("not a unary primitive");
    }
    return make(id);
}

Var Tape::add(Var a, Var b) { return binary(Op::add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::mul, a, b); }
Var Tape::div(Var a, Var b) { return binary(Op::div, a, b); }
Var Tape::min(Var a, Var b) { return binary(Op::min, a, b); }
Var Tape::max(Var a, Var b) { return binary(Op::max, a, b); }
Var Tape::neg(Var a) { return unary(Op::neg, a); }
Var Tape::exp(Var a) { return unary(Op::exp, a); }
Var Tape::log(Var a) { return unary(Op::log, a); }
Var Tape::sigmoid(Var a) { return unary(Op::sigmoid, a); }
Var Tape::log_sigmoid(Var a) { return unary(Op::log_sigmoid, a); }
Var Tape::abs(Var a) { return unary(Op::abs, a); }

Var Tape::scale(Var a, double c)
{
    check_owned(a);
    const std::size_t n = nodes_[a.id_].size;
    const auto id = push(Op::scale, a.id_, kNone, n, nodes_[a.id_].needs_grad);
    nodes_[id].param = c;
    const double* pa = cval(a.id_);
    double* out = val(id);
    for (std::size_t i = 0; i < n; ++i) out[i] = c * pa[i];
    return make(id);
}

Var Tape::shift(Var a, double c)
{
    check_owned(a);
    const std::size_t n = nodes_[a.id_].size;
    const auto id = push(Op::shift, a.id_, kNone, n, nodes_[a.id_].needs_grad);
    nodes_[id].param = c;
    const double* pa = cval(a.id_);
    double* out = val(id);
    for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] + c;
    return make(id);
}

Var Tape::sum(Var a)
{
    check_owned(a);
    const std::size_t n = nodes_[a.id_].size;
    const auto id = push(Op::sum, a.id_, kNone, 1, nodes_[a.id_].needs_grad);
    const double* pa = cval(a.id_);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += pa[i];
    *val(id) = acc;
    return make(id);
}

Var Tape::dot(Var a, Var b)
{
    check_owned(a);
    check_owned(b);
    const std::size_t n = nodes_[a.id_].size;
    if (nodes_[b.id_].size != n)
        throw UnsupportedOperationError("dot: size mismatch");
    const auto id = push(Op::dot, a.id_, b.id_, 1, nodes_[a.id_].needs_grad || nodes_[b.id_].needs_grad);
    const double* pa = cval(a.id_);
    const double* pb = cval(b.id_);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += pa[i] * pb[i];
    *val(id) = acc;
    return make(id);
}

Var Tape::slice(Var a, std::size_t offset, std::size_t length)
{
    check_owned(a);
    if (offset + length > nodes_[a.id_].size)
        throw UnsupportedOperationError("slice out of range");
    const auto id = push(Op::slice, a.id_, kNone, length, nodes_[a.id_].needs_grad);
    nodes_[id].param = static_cast<double>(offset);
    const double* pa = cval(a.id_) + offset;
    std::copy(pa, pa + length, val(id));
    return make(id);
}

Var Tape::gather(Var a, std::span<const std::uint32_t> index)
{
    check_owned(a);
    const std::size_t na = nodes_[a.id_].size;
    for (const std::uint32_t i : index)
        if (i >= na)
            throw UnsupportedOperationError("gather index out of range");
    const auto id = push(Op::gather, a.id_, kNone, index.size(), nodes_[a.id_].needs_grad);
    nodes_[id].aux_off = index_.size();
    nodes_[id].aux_len = index.size();
    index_.insert(index_.end(), index.begin(), index.end());
    const double* pa = cval(a.id_);
    double* out = val(id);
    for (std::size_t i = 0; i < index.size(); ++i) out[i] = pa[index[i]];
    return make(id);
}

Var Tape::concat(std::span<const Var> parts)
{
    std::size_t n = 0;
    bool grad = false;
    for (const Var& p : parts) {
        check_owned(p);
        n += nodes_[p.id_].size;
        grad = grad || nodes_[p.id_].needs_grad;
    }
    const auto id = push(Op::concat, kNone, kNone, n, grad);
    nodes_[id].aux_off = index_.size();
    nodes_[id].aux_len = parts.size();
    std::size_t off = 0;
    for (const Var& p : parts) {
        index_.push_back(p.id_);
        const double* src = cval(p.id_);
        std::copy(src, src + nodes_[p.id_].size, val(id) + off);
        off += nodes_[p.id_].size;
    }
    return make(id);
}

void Tape::backward(Var output)
{
    check_owned(output);
    if (nodes_[output.id_].size != 1)
        throw UnsupportedOperationError("backward() needs a scalar output");

    adjoints_.reset();
    for (Node& n : nodes_)
        n.adj_off = n.needs_grad ? adjoints_.allocate(n.size) : 0;
    std::fill(adjoints_.data(), adjoints_.data() + adjoints_.size(), 0.0);
    adjoints_ready_ = true;

    double* adj = adjoints_.data();
    if (nodes_[output.id_].needs_grad)
        adj[nodes_[output.id_].adj_off] = 1.0;

    for (std::size_t k = output.id_ + 1; k-- > 0;) {
        const Node& n = nodes_[k];
        if (!n.needs_grad)
            continue;
        const double* g = adj + n.adj_off;
        const double* out = cval(static_cast<std::uint32_t>(k));
        const Node* na = n.a != kNone ? &nodes_[n.a] : nullptr;
        const Node* nb = n.b != kNone ? &nodes_[n.b] : nullptr;
        double* ga = na != nullptr && na->needs_grad ? adj + na->adj_off : nullptr;
        double* gb = nb != nullptr && nb->needs_grad ? adj + nb->adj_off : nullptr;
        const double* pa = na != nullptr ? cval(n.a) : nullptr;
        const double* pb = nb != nullptr ? cval(n.b) : nullptr;
        const std::size_t size = n.size;
        const std::size_t sa = na != nullptr && na->size == 1 ? 0 : 1;
        const std::size_t sb = nb != nullptr && nb->size == 1 ? 0 : 1;

        switch (n.op) {
        case Op::input:
        case Op::constant:
        case Op::constant_ref:
            break;
        case Op::add:
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[i * sa] += g[i];
            if (gb) for (std::size_t i = 0; i < size; ++i) gb[i * sb] += g[i];
            break;
        case Op::sub:
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[i * sa] += g[i];
            if (gb) for (std::size_t i = 0; i < size; ++i) gb[i * sb] -= g[i];
            break;
        case Op::mul:
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[i * sa] += g[i] * pb[i * sb];
            if (gb) for (std::size_t i = 0; i < size; ++i) gb[i * sb] += g[i] * pa[i * sa];
            break;
        case Op::div:
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[i * sa] += g[i] / pb[i * sb];
            if (gb) for (std::size_t i = 0; i < size; ++i) gb[i * sb] -= g[i] * out[i] / pb[i * sb];
            break;
        case Op::min:
            for (std::size_t i = 0; i < size; ++i) {
                if (pa[i * sa] <= pb[i * sb]) {
                    if (ga) ga[i * sa] += g[i];
                } else if (gb) {
                    gb[i * sb] += g[i];
                }
            }
            break;
        case Op::max:
            for (std::size_t i = 0; i < size; ++i) {
                if (pa[i * sa] >= pb[i * sb]) {
                    if (ga) ga[i * sa] += g[i];
                } else if (gb) {
                    gb[i * sb] += g[i];
                }
            }
            break;
        case Op::neg:
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[i] -= g[i];
            break;
        case Op::scale:
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[i] += n.param * g[i];
            break;
        case Op::shift:
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[i] += g[i];
            break;
        case Op::exp:
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * out[i];
            break;
        case Op::log:
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] / pa[i];
            break;
        case Op::sigmoid:
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * out[i] * (1.0 - out[i]);
            break;
        case Op::log_sigmoid: {
            const double* d = aux_.data() + n.aux_off;
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * d[i];
            break;
        }
        case Op::abs:
            if (ga)
                for (std::size_t i = 0; i < size; ++i)
                    ga[i] += pa[i] > 0.0 ? g[i] : (pa[i] < 0.0 ? -g[i] : 0.0);
            break;
        case Op::sum:
            if (ga) for (std::size_t i = 0; i < na->size; ++i) ga[i] += g[0];
            break;
        case Op::dot:
            if (ga) for (std::size_t i = 0; i < na->size; ++i) ga[i] += g[0] * pb[i];
            if (gb) for (std::size_t i = 0; i < na->size; ++i) gb[i] += g[0] * pa[i];
            break;
        case Op::slice: {
            const auto off = static_cast<std::size_t>(n.param);
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[off + i] += g[i];
            break;
        }
        case Op::gather: {
            const std::uint32_t* idx = index_.data() + n.aux_off;
            if (ga) for (std::size_t i = 0; i < size; ++i) ga[idx[i]] += g[i];
            break;
        }
        case Op::concat: {
            std::size_t off = 0;
            for (std::size_t p = 0; p < n.aux_len; ++p) {
                const Node& part = nodes_[index_[n.aux_off + p]];
                if (part.needs_grad) {
                    double* gp = adj + part.adj_off;
                    for (std::size_t i = 0; i < part.size; ++i) gp[i] += g[off + i];
                }
                off += part.size;
            }
            break;
        }
        }
    }

    for (std::size_t k = 0; k <= output.id_; ++k) {
        const Node& n = nodes_[k];
        if (n.op != Op::input)
            continue;
        for (std::size_t i = 0; i < n.size; ++i) {
            if (!std::isfinite(adj[n.adj_off + i])) {
                // Report where the poison entered: the earliest non-finite
                // value if there is one, else the earliest non-finite adjoint.
                std::size_t culprit = first_non_finite_value();
                for (std::size_t j = 0; j <= output.id_ && culprit == npos; ++j) {
                    const Node& m = nodes_[j];
                    for (std::size_t e = 0; m.needs_grad && e < m.size; ++e)
                        if (!std::isfinite(adj[m.adj_off + e])) {
                            culprit = j;
                            break;
                        }
                }
                throw NonFiniteGradientError(culprit, "non-finite gradient; poisoned at node " +
                                                          std::to_string(culprit));
            }
        }
    }
}

std::span<const double> Tape::grad(Var v) const
{
    const Node& n = node(v);
    if (!adjoints_ready_)
        throw UnsupportedOperationError("grad() before backward()");
    if (!n.needs_grad) {
        if (zeros_.size() < n.size)
            zeros_.assign(n.size, 0.0);
        return {zeros_.data(), n.size};
    }
    return {adjoints_.data() + n.adj_off, n.size};
}

std::size_t Tape::first_non_finite_value() const noexcept
{
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        const double* v = cval(static_cast<std::uint32_t>(k));
        for (std::size_t i = 0; i < nodes_[k].size; ++i)
            if (!std::isfinite(v[i]))
                return k;
    }
    return npos;
}

// ---------------------------------------------------------------- sugar

namespace {

Tape& tape_of(Var a)
{
    if (!a.valid())
        throw UnsupportedOperationError("operation on an empty Var");
    return *a.tape();
}

} // namespace

Var operator+(Var a, Var b) { return tape_of(a).add(a, b); }
Var operator-(Var a, Var b) { return tape_of(a).sub(a, b); }
Var operator*(Var a, Var b) { return tape_of(a).mul(a, b); }
Var operator/(Var a, Var b) { return tape_of(a).div(a, b); }
Var operator-(Var a) { return tape_of(a).neg(a); }
Var operator+(Var a, double c) { return tape_of(a).shift(a, c); }
Var operator+(double c, Var a) { return tape_of(a).shift(a, c); }
Var operator-(Var a, double c) { return tape_of(a).shift(a, -c); }
Var operator-(double c, Var a) { return tape_of(a).shift(tape_of(a).neg(a), c); }
Var operator*(Var a, double c) { return tape_of(a).scale(a, c); }
Var operator*(double c, Var a) { return tape_of(a).scale(a, c); }
Var operator/(Var a, double c) { return tape_of(a).scale(a, 1.0 / c); }

Var exp(Var a) { return tape_of(a).exp(a); }
Var log(Var a) { return tape_of(a).log(a); }
Var sigmoid(Var a) { return tape_of(a).sigmoid(a); }
Var log_sigmoid(Var a) { return tape_of(a).log_sigmoid(a); }
Var abs(Var a) { return tape_of(a).abs(a); }
Var min(Var a, Var b) { return tape_of(a).min(a, b); }
Var max(Var a, Var b) { return tape_of(a).max(a, b); }
Var sum(Var a) { return tape_of(a).sum(a); }
Var dot(Var a, Var b) { return tape_of(a).dot(a, b); }
Var slice(Var a, std::size_t offset, std::size_t length) { return tape_of(a).slice(a, offset, length); }
Var element(Var a, std::size_t i) { return tape_of(a).slice(a, i, 1); }
Var gather(Var a, std::span<const std::uint32_t> index) { return tape_of(a).gather(a, index); }

Var concat(std::initializer_list<Var> parts)
{
    if (parts.size() == 0)
        throw UnsupportedOperationError("concat of nothing");
    return tape_of(*parts.begin()).concat(std::span<const Var>(parts.begin(), parts.size()));
}

// ---------------------------------------------------------------- record

double Recording::value() const { return output_.scalar(); }

std::vector<double> Recording::gradient()
{
    if (!swept_) {
        tape_->backward(output_);
        swept_ = true;
    }
    const auto g = tape_->grad(input_);
    return {g.begin(), g.end()};
}

Recording record(const std::function<Var(Var)>& f, std::span<const double> input)
{
    Recording rec;
    rec.input_ = rec.tape_->input(input);
    rec.output_ = f(rec.input_);
    if (rec.output_.tape() != rec.tape_.get())
        throw UnsupportedOperationError("recorded program returned a Var from another tape");
    if (rec.output_.size() != 1)
        throw UnsupportedOperationError("recorded program must return a scalar");
    return rec;
}

} // namespace opvi::ad
