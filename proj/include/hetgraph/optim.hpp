#pragma once

#include "hetgraph/sparse.hpp"

#include <span>
#include <vector>

namespace hetgraph {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;   // L2 term added to the gradient of decayed blocks
};

/// A parameter block handed to the optimizer. Biases are usually not decayed.
struct ParamRef {
    Matrix* value = nullptr;
    const Matrix* grad = nullptr;
    bool decay = true;
};

/// Adam with bias-corrected moments. Moment buffers are created on the first
/// step and matched to blocks by position.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    void step(std::span<const ParamRef> params);

    [[nodiscard]] long long steps() const { return t_; }
    [[nodiscard]] const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    long long t_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

}  // namespace hetgraph
