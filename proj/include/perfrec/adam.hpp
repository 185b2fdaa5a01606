#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace perfrec {

/// Plain Adam with bias correction. First step magnitude is ~step_size per
/// coordinate when |g| >> epsilon.
class AdamOptimizer {
  public:
    AdamOptimizer(std::size_t n, double step_size, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8)
        : step_(step_size), beta1_(beta1), beta2_(beta2), eps_(epsilon),
          m_(n, 0.0), v_(n, 0.0) {}

    void update(std::vector<double>& x, const std::vector<double>& grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, t_);
        const double c2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < x.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
            x[i] -= step_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
        }
    }

    void reset() {
        t_ = 0;
        std::fill(m_.begin(), m_.end(), 0.0);
        std::fill(v_.begin(), v_.end(), 0.0);
    }

  private:
    double step_;
    double beta1_;
    double beta2_;
    double eps_;
    long t_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

}  // namespace perfrec
