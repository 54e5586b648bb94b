#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "cenhdr/autodiff.hpp"
#include "cenhdr/tensor.hpp"

namespace cenhdr {

template <typename T>
using ParamMap = std::map<std::string, BasicTensor<T>>;

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    std::int64_t step = 0;
    ParamMap<T> first_moment;
    ParamMap<T> second_moment;
};

/// One bias-corrected Adam update of every entry in `params`. Moments are
/// created lazily on the first step. Throws if a parameter has no gradient.
template <typename T>
void adam_step(ParamMap<T>& params, const ad::Gradients<T>& grads, AdamState<T>& state, double lr, const AdamConfig& config = {});

}  // namespace cenhdr
