#pragma once

// Shared helpers for the unit tests: seeded random tensors and a central
// finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "cenhdr/autodiff.hpp"
#include "cenhdr/optim.hpp"
#include "cenhdr/tensor.hpp"

namespace cenhdr::testing {

template <typename T = float>
BasicTensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    BasicTensor<T> t(shape);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

/// Builds a scalar loss on a fresh tape from the given parameters.
using LossBuilder = std::function<ad::Var<double>(ad::Tape<double>&, const std::map<std::string, ad::Var<double>>&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

/// Compares backward() against central differences for up to `per_param`
/// evenly spaced elements of every parameter.
inline GradCheckResult gradient_check(const ParamMap<double>& params, const LossBuilder& build, std::size_t per_param = 64, double h = 1e-6) {
    auto evaluate = [&](const ParamMap<double>& p) {
        ad::Tape<double> tape;
        std::map<std::string, ad::Var<double>> vars;
        for (const auto& [name, value] : p) vars.emplace(name, tape.parameter(name, value));
        return build(tape, vars).value()[0];
    };
    ad::Tape<double> tape;
    std::map<std::string, ad::Var<double>> vars;
    for (const auto& [name, value] : params) vars.emplace(name, tape.parameter(name, value));
    const auto loss = build(tape, vars);
    const auto grads = ad::backward(tape, loss);

    GradCheckResult result;
    ParamMap<double> probe = params;
    for (const auto& [name, value] : params) {
        const std::size_t n = value.data().size();
        const std::size_t step = std::max<std::size_t>(1, n / per_param);
        for (std::size_t i = 0; i < n; i += step) {
            auto& slot = probe.at(name)[i];
            const double orig = slot;
            slot = orig + h;
            const double up = evaluate(probe);
            slot = orig - h;
            const double down = evaluate(probe);
            slot = orig;
            const double fd = (up - down) / (2.0 * h);
            const double an = grads.at(name)[i];
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
            ++result.checked;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(an) + " fd=" + std::to_string(fd);
            }
        }
    }
    return result;
}

}  // namespace cenhdr::testing
