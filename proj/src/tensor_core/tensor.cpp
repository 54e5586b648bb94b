#include "cenhdr/tensor.hpp"

namespace cenhdr {

std::string Shape::str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " + std::to_string(w) + ")";
}

Shape Shape::from_dims(std::span<const std::int64_t> dims) {
    if (dims.size() != 4) throw DimensionError("tensor", "rank", "expected rank 4, got rank " + std::to_string(dims.size()));
    for (const auto d : dims)
        if (d < 0) throw DimensionError("tensor", "shape", "negative extent " + std::to_string(d));
    return {dims[0], dims[1], dims[2], dims[3]};
}

}  // namespace cenhdr
