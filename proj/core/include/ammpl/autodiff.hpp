#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ammpl/array.hpp"
#include "ammpl/random.hpp"

namespace ammpl::ad {

using NodeId = std::size_t;

class Tape;

/// Handle to a value recorded on a Tape.
///
/// A Var is a (tape, node) pair; it is cheap to copy and only valid while its
/// tape is alive. Vars from different tapes must not be mixed.
class Var {
public:
    Var() = default;

    const Array& value() const;
    const Shape& shape() const { return value().shape(); }
    NodeId id() const noexcept { return id_; }
    bool requires_grad() const;
    Tape& tape() const { return *tape_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    NodeId id_ = 0;
};

using GradientMap = std::unordered_map<NodeId, Array>;

/// Computation tape for one forward/backward pass.
///
/// Nodes are appended in execution order, which is a topological order, so
/// the reverse sweep simply walks the node list backwards. Node values keep
/// stable addresses while the tape grows.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Array& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Input that may receive gradients (a learnable parameter).
    Var leaf(Array value, bool requires_grad = true);
    /// Input that never receives gradients.
    Var constant(Array value) { return leaf(std::move(value), false); }

    /// Appends an operation node. `requires_grad` is derived from the parents.
    Var record(Array value, std::span<const Var> parents, BackwardFn backward);

    const Array& value(NodeId id) const { return nodes_.at(id).value; }
    bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient buffer of a node, allocated on first use; nullptr when the
    /// node does not require gradients. Only valid during backward().
    Array* grad_slot(NodeId id);

    /// Reverse sweep from a scalar loss (shape {1}). Returns an entry for
    /// every requested node: its accumulated gradient, or zeros.
    GradientMap backward(const Var& loss, std::span<const Var> params);

private:
    struct Node {
        Array value;
        Array grad;
        bool requires_grad = false;
        bool has_grad = false;
        BackwardFn backward;
    };

    std::deque<Node> nodes_;
};

// Elementwise binary operations on equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

/// x + b where b's shape equals the trailing dimensions of x.
Var add_bias(const Var& x, const Var& b);
/// Numpy-style broadcast (right-aligned, size-1 or missing dims expand).
Var broadcast_to(const Var& x, const Shape& shape);

Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double c);
Var div_scalar(const Var& x, double s);

/// [m x k] * [k x n] -> [m x n]
Var matmul(const Var& a, const Var& b);
/// [B x m x k] * [B x k x n] -> [B x m x n]
Var bmm(const Var& a, const Var& b);

Var sum(const Var& x);
Var mean(const Var& x);
/// Reduces `axis` away; a fully reduced result has shape {1}.
Var sum_axis(const Var& x, std::size_t axis);
Var mean_axis(const Var& x, std::size_t axis);

Var tanh(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);

/// Euclidean norm over the last axis, which is removed.
Var l2_norm_last(const Var& x);
/// x / ||x|| along the last axis, composed from l2_norm_last and div.
Var normalize_last(const Var& x);

Var softmax(const Var& x, std::size_t axis);
Var log_softmax(const Var& x, std::size_t axis);

Var concat(std::span<const Var> parts, std::size_t axis);
Var reshape(const Var& x, const Shape& shape);
/// Single element at a flat index, as shape {1}.
Var pick(const Var& x, std::size_t flat_index);

/// Same value, cut from the graph.
Var detach(const Var& x);
/// min(1, max(0, x)); gradient passes only strictly inside (0, 1).
Var clamp01(const Var& x);

/// Binary sample m ~ Bernoulli(p) elementwise (row-major draw order), returned
/// as detach(m - p) + p so the value is m and dL/dp == dL/dm.
/// Throws ContractError if any p lies outside [0, 1].
Var bernoulli_straight_through(const Var& p, RandomStream& rng);

/// Draws the binary sample only (no graph), same draw order as above.
Array sample_bernoulli(const Array& p, RandomStream& rng);

}  // namespace ammpl::ad
