#include "hetgraph/optim.hpp"

#include "hetgraph/error.hpp"

#include <cmath>

namespace hetgraph {

void Adam::step(std::span<const ParamRef> params) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
            v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
        }
    }
    if (m_.size() != params.size()) throw UsageError("Adam: parameter block count changed between steps");

    ++t_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double step_size = config_.learning_rate / correction1;

    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& value = *params[k].value;
        const Matrix& grad = *params[k].grad;
        if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
            throw UsageError("Adam: gradient shape does not match parameter block " + std::to_string(k));
        }
        Matrix& m = m_[k];
        Matrix& v = v_[k];
        const double decay = params[k].decay ? config_.weight_decay : 0.0;
        for (Eigen::Index i = 0; i < value.size(); ++i) {
            const double g = grad.data()[i] + decay * value.data()[i];
            m.data()[i] = b1 * m.data()[i] + (1.0 - b1) * g;
            v.data()[i] = b2 * v.data()[i] + (1.0 - b2) * g * g;
            const double denom = std::sqrt(v.data()[i] / correction2) + config_.epsilon;
            value.data()[i] -= step_size * m.data()[i] / denom;
        }
    }
}

}  // namespace hetgraph
