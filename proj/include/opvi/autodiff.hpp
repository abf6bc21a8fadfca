#ifndef OPVI_AUTODIFF_HPP
#define OPVI_AUTODIFF_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

namespace opvi::ad {

class Tape;

/**
 * Handle to a recorded value on a Tape. Values are dense double vectors;
 * a size-1 value is a scalar and broadcasts against any length in binary
 * elementwise operations.
 */
class Var {
public:
    Var() = default;

    Tape* tape() const noexcept { return tape_; }
    std::uint32_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    std::size_t size() const;
    std::span<const double> value() const;
    /// Value of a size-1 Var.
    double scalar() const;

private:
    friend class Tape;
    Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::uint32_t id_ = 0;
};

enum class Op : std::uint8_t {
    input,
    constant,
    constant_ref,
    add,
    sub,
    mul,
    div,
    neg,
    scale,
    shift,
    exp,
    log,
    sigmoid,
    log_sigmoid,
    abs,
    min,
    max,
    sum,
    dot,
    slice,
    gather,
    concat,
};

/**
 * Append-only reverse-mode tape.
 *
 * Storage is a pair of flat arenas (values, adjoints) plus one node record
 * per operation, so a forward pass over vectors of events costs one node
 * per vector operation rather than per element. clear() keeps capacity so a
 * tape can be reused across optimizer steps without reallocating.
 *
 * Conventions at non-differentiable points: d|x|/dx = 0 at x = 0; min and
 * max route the adjoint to the first argument on ties.
 *
 * A Tape is not thread-safe; use one per thread.
 */
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void clear() noexcept;
    std::size_t n_nodes() const noexcept { return nodes_.size(); }

    /// Differentiable leaf.
    Var input(std::span<const double> values);
    Var input(double value) { return input(std::span<const double>(&value, 1)); }

    /// Copied constant.
    Var constant(std::span<const double> values);
    Var constant(double value) { return constant(std::span<const double>(&value, 1)); }
    /// Non-owning constant; `values` must outlive every use of this tape
    /// until the next clear().
    Var constant_ref(std::span<const double> values);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var neg(Var a);
    Var scale(Var a, double c);
    Var shift(Var a, double c);
    Var exp(Var a);
    Var log(Var a);
    Var sigmoid(Var a);
    /// log(sigmoid(a)) in the overflow-free form.
    Var log_sigmoid(Var a);
    Var abs(Var a);
    Var min(Var a, Var b);
    Var max(Var a, Var b);
    Var sum(Var a);
    Var dot(Var a, Var b);
    Var slice(Var a, std::size_t offset, std::size_t length);
    /// out[i] = a[index[i]]; the index list is copied.
    Var gather(Var a, std::span<const std::uint32_t> index);
    Var concat(std::span<const Var> parts);

    std::span<const double> value(Var v) const;

    /// Reverse sweep from a size-1 output. Throws NonFiniteGradientError
    /// (with the offending node index) if any input adjoint is not finite.
    void backward(Var output);
    /// Adjoint of a node after backward(); zeros for constants.
    std::span<const double> grad(Var v) const;

    /// Lowest node index whose value is not finite, or npos.
    std::size_t first_non_finite_value() const noexcept;
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    static constexpr std::uint32_t kNone = 0xFFFFFFFFu;

    struct Node {
        Op op;
        bool needs_grad;
        std::uint32_t a;
        std::uint32_t b;
        std::size_t size;
        std::size_t value_off;
        std::size_t adj_off;
        std::size_t aux_off;     // log_sigmoid derivative cache, gather index, concat parents
        std::size_t aux_len;
        double param;            // scale/shift constant, slice offset
        const double* ext;       // constant_ref storage
    };

    class Arena {
    public:
        std::size_t allocate(std::size_t n);
        double* data() noexcept { return data_.get(); }
        const double* data() const noexcept { return data_.get(); }
        std::size_t size() const noexcept { return size_; }
        void reset() noexcept { size_ = 0; }

    private:
        std::unique_ptr<double[]> data_;
        std::size_t size_ = 0;
        std::size_t capacity_ = 0;
    };

    const Node& node(Var v) const;
    void check_owned(Var v) const;
    std::uint32_t push(Op op, std::uint32_t a, std::uint32_t b, std::size_t size, bool needs_grad);
    double* val(std::uint32_t id) noexcept;
    /// Read access; honours constant_ref storage.
    const double* cval(std::uint32_t id) const noexcept;
    Var make(std::uint32_t id) { return Var(this, id); }
    Var binary(Op op, Var a, Var b);
    Var unary(Op op, Var a);

    std::vector<Node> nodes_;
    Arena values_;
    Arena adjoints_;
    Arena aux_;
    std::vector<std::uint32_t> index_;
    mutable std::vector<double> zeros_;
    bool adjoints_ready_ = false;
};

// Free-function sugar; both operands must live on the same tape.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);

Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);
Var abs(Var a);
Var min(Var a, Var b);
Var max(Var a, Var b);
Var sum(Var a);
Var dot(Var a, Var b);
Var slice(Var a, std::size_t offset, std::size_t length);
Var element(Var a, std::size_t i);
Var gather(Var a, std::span<const std::uint32_t> index);
Var concat(std::initializer_list<Var> parts);

/// Plain-double helpers sharing the tape's numerics.
double sigmoid(double z) noexcept;
double log_sigmoid(double z) noexcept;

/// A recorded scalar program f: R^n -> R together with its tape.
class Recording {
public:
    double value() const;
    /// Gradient of the output with respect to the recorded input.
    std::vector<double> gradient();
    Tape& tape() noexcept { return *tape_; }

private:
    friend Recording record(const std::function<Var(Var)>& f, std::span<const double> input);
    std::unique_ptr<Tape> tape_ = std::make_unique<Tape>();
    Var input_;
    Var output_;
    bool swept_ = false;
};

/// Records f at `input`. Throws UnsupportedOperationError if f returns a
/// non-scalar or a Var from another tape.
Recording record(const std::function<Var(Var)>& f, std::span<const double> input);

} // namespace opvi::ad

#endif // OPVI_AUTODIFF_HPP
