#include "dvsnet/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dvsnet/error.hpp"

namespace dvsnet::nn {

GradCheckResult check_gradients(const std::function<Tensor<double>()>& loss,
                                const std::vector<Tensor<double>>& inputs, double step, double floor,
                                double scale_floor) {
    std::vector<Tensor<double>> ins = inputs;
    for (auto& t : ins) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    const Tensor<double> out = loss();
    if (out.size() != 1) throw ShapeError("check_gradients: loss must be scalar");
    out.backward();

    double largest = 0;
    for (auto& t : ins)
        if (t.has_grad()) largest = std::max(largest, t.grad().cwiseAbs().maxCoeff());
    const double denom_floor = std::max(floor, scale_floor * largest);

    GradCheckResult res;
    for (auto& t : ins) {
        const Vec<double> analytic = t.has_grad() ? t.grad() : Vec<double>::Zero(t.size());
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            double& x = t.value()[i];
            const double saved = x;
            double plus, minus;
            {
                NoGradGuard ng;
                x = saved + step;
                plus = loss().item();
                x = saved - step;
                minus = loss().item();
            }
            x = saved;
            const double numeric = (plus - minus) / (2 * step);
            const double abs_err = std::abs(analytic[i] - numeric);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), denom_floor});
            res.max_abs_error = std::max(res.max_abs_error, abs_err);
            res.max_rel_error = std::max(res.max_rel_error, abs_err / denom);
            ++res.checked;
        }
    }
    return res;
}

}  // namespace dvsnet::nn
