#include "cenhdr/autodiff.hpp"

#include <algorithm>
#include <set>

namespace cenhdr::ad {

namespace k = cenhdr::kernels;

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
    return tape->value(*this);
}

template <typename T>
Var<T> Tape<T>::parameter(const std::string& name, BasicTensor<T> value) {
    for (const auto& node : nodes_)
        if (!node.parameter.empty() && node.parameter == name) throw Error("tape: parameter '" + name + "' registered twice");
    Node node;
    node.op = "parameter";
    node.value = std::move(value);
    node.requires_grad = true;
    node.parameter = name;
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::constant(BasicTensor<T> value) {
    Node node;
    node.op = "constant";
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(std::string op, BasicTensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> fn) {
    Node node;
    node.op = std::move(op);
    node.value = std::move(value);
    node.is_entry = true;
    for (const auto& in : inputs) {
        if (in.tape != this) throw Error("tape: input of '" + node.op + "' belongs to a different tape");
        node.inputs.push_back(in.id);
        node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
    }
    if (!fn) node.requires_grad = false;
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    ++entries_;
    return {this, nodes_.size() - 1};
}

template <typename T>
std::vector<std::string> Tape<T>::parameter_names() const {
    std::vector<std::string> names;
    for (const auto& node : nodes_)
        if (!node.parameter.empty()) names.push_back(node.parameter);
    return names;
}

template <typename T>
void BackwardContext<T>::accumulate(std::size_t i, const BasicTensor<T>& grad) {
    const std::size_t target = tape_.nodes_[node_].inputs.at(i);
    if (!tape_.nodes_[target].requires_grad) return;
    auto& slot = grads_[target];
    if (grad.shape() != tape_.nodes_[target].value.shape())
        throw DimensionError("backward", "gradient", "gradient " + grad.shape().str() + " does not match value " + tape_.nodes_[target].value.shape().str());
    if (slot.empty()) {
        slot = grad;
    } else {
        for (std::size_t j = 0; j < slot.data().size(); ++j) slot[j] += grad[j];
    }
}

template <typename T>
Gradients<T> backward(Tape<T>& tape, Var<T> loss, std::vector<std::string>* visit_order) {
    if (loss.tape != &tape) throw Error("backward: loss belongs to a different tape");
    const auto& loss_value = tape.value(loss);
    if (loss_value.numel() != 1) throw DimensionError("backward", "loss", "loss must be a scalar, got " + loss_value.shape().str());

    std::vector<BasicTensor<T>> grads(tape.nodes_.size());
    grads[loss.id] = BasicTensor<T>(loss_value.shape(), T(1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        auto& node = tape.nodes_[i];
        if (!node.is_entry || !node.requires_grad || grads[i].empty()) continue;
        if (visit_order) visit_order->push_back(node.op);
        const BasicTensor<T> grad_out = std::move(grads[i]);
        grads[i] = BasicTensor<T>();
        BackwardContext<T> ctx(tape, i, grad_out, grads);
        node.backward(ctx);
    }

    Gradients<T> out;
    for (std::size_t i = 0; i < tape.nodes_.size(); ++i) {
        const auto& node = tape.nodes_[i];
        if (node.parameter.empty()) continue;
        out[node.parameter] = grads[i].empty() ? BasicTensor<T>(node.value.shape()) : std::move(grads[i]);
    }
    return out;
}

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, k::Conv2dParams p) {
    auto* tape = input.tape;
    auto out = k::conv2d(input.value(), weight.value(), bias.value(), p);
    return tape->record("conv2d", std::move(out), {input, weight, bias}, [p](BackwardContext<T>& ctx) {
        auto g = k::conv2d_backward(ctx.input(0), ctx.input(1), ctx.grad_out(), p, ctx.needs(0), ctx.needs(1), ctx.needs(2));
        if (ctx.needs(0)) ctx.accumulate(0, g.input);
        if (ctx.needs(1)) ctx.accumulate(1, g.weight);
        if (ctx.needs(2)) ctx.accumulate(2, BasicTensor<T>(ctx.input(2).shape(), std::vector<T>(g.bias.data().begin(), g.bias.data().end())));
    });
}

template <typename T>
Var<T> pixel_shuffle(Var<T> input, int r) {
    return input.tape->record("pixel_shuffle", k::pixel_shuffle(input.value(), r), {input},
                              [r](BackwardContext<T>& ctx) { ctx.accumulate(0, k::pixel_unshuffle(ctx.grad_out(), r)); });
}

template <typename T>
Var<T> global_avg_pool(Var<T> input) {
    return input.tape->record("global_avg_pool", k::global_avg_pool(input.value()), {input}, [](BackwardContext<T>& ctx) {
        ctx.accumulate(0, k::global_avg_pool_backward(ctx.grad_out(), ctx.input(0).shape()));
    });
}

template <typename T>
Var<T> linear(Var<T> input, Var<T> weight, Var<T> bias) {
    return input.tape->record("linear", k::linear(input.value(), weight.value(), bias.value()), {input, weight, bias}, [](BackwardContext<T>& ctx) {
        auto g = k::linear_backward(ctx.input(0), ctx.input(1), ctx.grad_out());
        ctx.accumulate(0, g.input);
        ctx.accumulate(1, g.weight);
        ctx.accumulate(2, BasicTensor<T>(ctx.input(2).shape(), std::vector<T>(g.bias.data().begin(), g.bias.data().end())));
    });
}

namespace {
template <typename T>
Var<T> activation(Var<T> input, k::Activation kind, const char* name) {
    return input.tape->record(name, k::activation(input.value(), kind), {input}, [kind](BackwardContext<T>& ctx) {
        ctx.accumulate(0, k::activation_backward(ctx.input(0), ctx.output(), ctx.grad_out(), kind));
    });
}

template <typename T>
Var<T> binary(Var<T> a, Var<T> b, k::Binary kind, const char* name) {
    return a.tape->record(name, k::elementwise(a.value(), b.value(), kind), {a, b}, [kind](BackwardContext<T>& ctx) {
        auto g = k::elementwise_backward(ctx.input(0), ctx.input(1), ctx.grad_out(), kind);
        ctx.accumulate(0, g.a);
        ctx.accumulate(1, g.b);
    });
}
}  // namespace

template <typename T>
Var<T> relu(Var<T> input) {
    return activation(input, k::Activation::relu, "relu");
}

template <typename T>
Var<T> sigmoid(Var<T> input) {
    return activation(input, k::Activation::sigmoid, "sigmoid");
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    return binary(a, b, k::Binary::add, "add");
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    return binary(a, b, k::Binary::mul, "mul");
}

template <typename T>
Var<T> expand(Var<T> input, const Shape& target) {
    return input.tape->record("expand", k::expand(input.value(), target), {input},
                              [](BackwardContext<T>& ctx) { ctx.accumulate(0, k::expand_backward(ctx.grad_out(), ctx.input(0).shape())); });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& inputs) {
    if (inputs.empty()) throw DimensionError("concat_channels", "inputs", "need at least one tensor");
    std::vector<const BasicTensor<T>*> values;
    std::vector<std::int64_t> channels;
    for (const auto& v : inputs) {
        values.push_back(&v.value());
        channels.push_back(v.shape().c);
    }
    auto out = k::concat_channels<T>(values);
    return inputs.front().tape->record("concat_channels", std::move(out), inputs, [channels](BackwardContext<T>& ctx) {
        auto parts = k::split_channels(ctx.grad_out(), channels);
        for (std::size_t i = 0; i < parts.size(); ++i) ctx.accumulate(i, parts[i]);
    });
}

template <typename T>
Var<T> l1_loss(Var<T> a, Var<T> b) {
    const T value = k::l1_loss(a.value(), b.value());
    return a.tape->record("l1_loss", BasicTensor<T>({1, 1, 1, 1}, value), {a, b}, [](BackwardContext<T>& ctx) {
        auto g = k::l1_loss_backward(ctx.input(0), ctx.input(1), ctx.grad_out()[0]);
        if (ctx.needs(1)) ctx.accumulate(1, k::scale(g, -1.0));
        ctx.accumulate(0, g);
    });
}

template <typename T>
Var<T> mu_law(Var<T> input, double mu) {
    return input.tape->record("mu_law", k::mu_law(input.value(), mu), {input},
                              [mu](BackwardContext<T>& ctx) { ctx.accumulate(0, k::mu_law_backward(ctx.input(0), ctx.grad_out(), mu)); });
}

template <typename T>
Var<T> mean(Var<T> input) {
    return input.tape->record("mean", BasicTensor<T>({1, 1, 1, 1}, k::mean(input.value())), {input}, [](BackwardContext<T>& ctx) {
        const auto& in = ctx.input(0);
        ctx.accumulate(0, BasicTensor<T>(in.shape(), static_cast<T>(static_cast<double>(ctx.grad_out()[0]) / static_cast<double>(in.numel()))));
    });
}

template <typename T>
Var<T> weighted_sum(Var<T> a, double wa, Var<T> b, double wb) {
    if (a.value().numel() != 1 || b.value().numel() != 1) throw DimensionError("weighted_sum", "elements", "operands must be scalars");
    const T value = static_cast<T>(wa * static_cast<double>(a.value()[0]) + wb * static_cast<double>(b.value()[0]));
    return a.tape->record("weighted_sum", BasicTensor<T>({1, 1, 1, 1}, value), {a, b}, [wa, wb](BackwardContext<T>& ctx) {
        const double g = ctx.grad_out()[0];
        ctx.accumulate(0, BasicTensor<T>(ctx.input(0).shape(), static_cast<T>(g * wa)));
        ctx.accumulate(1, BasicTensor<T>(ctx.input(1).shape(), static_cast<T>(g * wb)));
    });
}

#define CENHDR_INSTANTIATE_AD(T)                                                  \
    template struct Var<T>;                                                       \
    template class Tape<T>;                                                       \
    template class BackwardContext<T>;                                            \
    template Gradients<T> backward(Tape<T>&, Var<T>, std::vector<std::string>*);  \
    template Var<T> conv2d(Var<T>, Var<T>, Var<T>, k::Conv2dParams);              \
    template Var<T> pixel_shuffle(Var<T>, int);                                   \
    template Var<T> global_avg_pool(Var<T>);                                      \
    template Var<T> linear(Var<T>, Var<T>, Var<T>);                               \
    template Var<T> relu(Var<T>);                                                 \
    template Var<T> sigmoid(Var<T>);                                              \
    template Var<T> add(Var<T>, Var<T>);                                          \
    template Var<T> mul(Var<T>, Var<T>);                                          \
    template Var<T> expand(Var<T>, const Shape&);                                 \
    template Var<T> concat_channels(const std::vector<Var<T>>&);                  \
    template Var<T> l1_loss(Var<T>, Var<T>);                                      \
    template Var<T> mu_law(Var<T>, double);                                       \
    template Var<T> mean(Var<T>);                                                 \
    template Var<T> weighted_sum(Var<T>, double, Var<T>, double);

CENHDR_INSTANTIATE_AD(float)
CENHDR_INSTANTIATE_AD(double)

#undef CENHDR_INSTANTIATE_AD

}  // namespace cenhdr::ad
