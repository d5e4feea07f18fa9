#include "wdnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace wdnet {

double GradCheckReport::max_relative_error() const {
    double m = 0.0;
    for (const auto& p : params) m = std::max(m, p.relative_error);
    return m;
}

double GradCheckReport::global_relative_error() const {
    double err = 0.0, scale = 1e-30;
    for (const auto& p : params) {
        err = std::max(err, p.max_abs_error);
        scale = std::max(scale, p.scale);
    }
    return err / scale;
}

std::string GradCheckReport::to_string() const {
    std::ostringstream os;
    for (const auto& p : params) {
        os << p.name << ": rel " << p.relative_error << " abs " << p.max_abs_error << " ("
           << p.entries_checked << " entries)\n";
    }
    return os.str();
}

template <typename T>
GradCheckReport grad_check(const std::function<TensorT<T>()>& loss,
                           std::vector<std::pair<std::string, TensorT<T>>> params,
                           const GradCheckOptions& options) {
    std::vector<TensorT<T>> handles;
    for (auto& [name, t] : params) handles.push_back(t);
    const auto analytic = gradients(loss(), std::span<TensorT<T>>(handles));

    std::mt19937_64 rng(options.seed);
    GradCheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& tensor = params[k].second;
        const std::size_t n = tensor.numel();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        if (options.max_entries && n > options.max_entries) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(options.max_entries);
            std::sort(idx.begin(), idx.end());
        }
        const T eps = static_cast<T>(options.epsilon);
        double max_diff = 0.0, norm_a = 0.0, norm_n = 0.0;
        for (std::size_t i : idx) {
            auto data = tensor.mutable_data();
            const T saved = data[i];
            data[i] = saved + eps;
            const double plus = static_cast<double>(loss().item());
            data[i] = saved - eps;
            const double minus = static_cast<double>(loss().item());
            data[i] = saved;
            // Divide by the realised step so float rounding of saved±eps does
            // not bias the estimate.
            const double step = static_cast<double>(static_cast<T>(saved + eps)) -
                                static_cast<double>(static_cast<T>(saved - eps));
            const double numeric = (plus - minus) / step;
            norm_n = std::max(norm_n, std::abs(numeric));
            norm_a = std::max(norm_a, std::abs(static_cast<double>(analytic[k][i])));
            max_diff = std::max(max_diff, std::abs(numeric - static_cast<double>(analytic[k][i])));
        }
        ParamCheck pc;
        pc.name = params[k].first;
        pc.entries_checked = idx.size();
        pc.max_abs_error = max_diff;
        const double denom = std::max({norm_a, norm_n, 1e-30});
        pc.scale = std::max(norm_a, norm_n);
        pc.relative_error = max_diff / denom;
        report.params.push_back(pc);
    }
    return report;
}

template GradCheckReport grad_check<float>(const std::function<Tensor()>&,
                                           std::vector<std::pair<std::string, Tensor>>,
                                           const GradCheckOptions&);
template GradCheckReport grad_check<double>(const std::function<Tensor64()>&,
                                            std::vector<std::pair<std::string, Tensor64>>,
                                            const GradCheckOptions&);

}  // namespace wdnet
