#pragma once

// Reverse-mode differentiation over the kernels in kernels.hpp.
//
// A Tape owns every value produced during one forward pass. Leaves are either
// named parameters (gradients are reported for them) or constants. Each
// primitive appends one entry holding its output and a closure that maps the
// output gradient onto its inputs. backward() walks entries newest-first.

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cenhdr/kernels.hpp"
#include "cenhdr/tensor.hpp"

namespace cenhdr::ad {

template <typename T>
class Tape;

template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const BasicTensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
};

template <typename T>
using Gradients = std::map<std::string, BasicTensor<T>>;

template <typename T>
class BackwardContext;

template <typename T>
using BackwardFn = std::function<void(BackwardContext<T>&)>;

/// Gradient of the scalar `loss` w.r.t. every registered parameter. Parameters
/// the loss does not reach get zero tensors. If `visit_order` is given, the op
/// name of each replayed entry is appended in replay order.
template <typename T>
Gradients<T> backward(Tape<T>& tape, Var<T> loss, std::vector<std::string>* visit_order = nullptr);

template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Registers a named leaf whose gradient backward() reports.
    Var<T> parameter(const std::string& name, BasicTensor<T> value);
    Var<T> constant(BasicTensor<T> value);

    /// Appends a primitive application. `fn` may be empty for
    /// non-differentiable entries.
    Var<T> record(std::string op, BasicTensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> fn);

    const BasicTensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }

    /// Number of recorded primitive entries (leaves excluded).
    std::size_t entries() const noexcept { return entries_; }
    std::vector<std::string> parameter_names() const;
    const std::string& op(Var<T> v) const { return nodes_.at(v.id).op; }

private:
    template <typename U>
    friend Gradients<U> backward(Tape<U>& tape, Var<U> loss, std::vector<std::string>* visit_order);
    friend class BackwardContext<T>;

    struct Node {
        std::string op;
        BasicTensor<T> value;
        std::vector<std::size_t> inputs;
        BackwardFn<T> backward;
        bool requires_grad = false;
        bool is_entry = false;
        std::string parameter;
    };

    std::vector<Node> nodes_;
    std::size_t entries_ = 0;
};

/// View handed to a backward closure while its entry is being replayed.
template <typename T>
class BackwardContext {
public:
    BackwardContext(const Tape<T>& tape, std::size_t node, const BasicTensor<T>& grad_out, std::vector<BasicTensor<T>>& grads)
        : tape_(tape), node_(node), grad_out_(grad_out), grads_(grads) {}

    const BasicTensor<T>& grad_out() const { return grad_out_; }
    const BasicTensor<T>& output() const { return tape_.nodes_[node_].value; }
    const BasicTensor<T>& input(std::size_t i) const { return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].value; }
    bool needs(std::size_t i) const { return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].requires_grad; }
    void accumulate(std::size_t i, const BasicTensor<T>& grad);

private:
    const Tape<T>& tape_;
    std::size_t node_;
    const BasicTensor<T>& grad_out_;
    std::vector<BasicTensor<T>>& grads_;
};

// Primitives. Every input Var must live on the same tape.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, kernels::Conv2dParams p);
template <typename T>
Var<T> pixel_shuffle(Var<T> input, int r);
template <typename T>
Var<T> global_avg_pool(Var<T> input);
template <typename T>
Var<T> linear(Var<T> input, Var<T> weight, Var<T> bias);
template <typename T>
Var<T> relu(Var<T> input);
template <typename T>
Var<T> sigmoid(Var<T> input);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> expand(Var<T> input, const Shape& target);
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& inputs);
template <typename T>
Var<T> l1_loss(Var<T> a, Var<T> b);
template <typename T>
Var<T> mu_law(Var<T> input, double mu);
template <typename T>
Var<T> mean(Var<T> input);
/// a * wa + b * wb for two scalars.
template <typename T>
Var<T> weighted_sum(Var<T> a, double wa, Var<T> b, double wb);

}  // namespace cenhdr::ad
