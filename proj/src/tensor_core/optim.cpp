#include "cenhdr/optim.hpp"

#include <cmath>

namespace cenhdr {

template <typename T>
void adam_step(ParamMap<T>& params, const ad::Gradients<T>& grads, AdamState<T>& state, double lr, const AdamConfig& config) {
    for (const auto& [name, value] : params) {
        const auto it = grads.find(name);
        if (it == grads.end()) throw Error("adam_step: missing gradient for parameter '" + name + "'");
        if (it->second.shape() != value.shape())
            throw DimensionError("adam_step", name, "gradient " + it->second.shape().str() + " vs parameter " + value.shape().str());
    }

    ++state.step;
    const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (auto& [name, value] : params) {
        const auto& grad = grads.at(name);
        auto& m = state.first_moment.try_emplace(name, value.shape()).first->second;
        auto& v = state.second_moment.try_emplace(name, value.shape()).first->second;
        for (std::size_t i = 0; i < value.data().size(); ++i) {
            const double g = grad[i];
            const double mi = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            const double vi = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = lr * (mi / correction1) / (std::sqrt(vi / correction2) + config.eps);
            value[i] = static_cast<T>(static_cast<double>(value[i]) - update);
        }
    }
}

template void adam_step(ParamMap<float>&, const ad::Gradients<float>&, AdamState<float>&, double, const AdamConfig&);
template void adam_step(ParamMap<double>&, const ad::Gradients<double>&, AdamState<double>&, double, const AdamConfig&);

}  // namespace cenhdr
