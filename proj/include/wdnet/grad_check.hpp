#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wdnet/tensor.hpp"

namespace wdnet {

struct GradCheckOptions {
    double epsilon = 1e-6;
    /// Entries checked per parameter; 0 checks every entry. When limited, a
    /// seeded random subset is used.
    std::size_t max_entries = 0;
    std::uint64_t seed = 0;
};

struct ParamCheck {
    std::string name;
    std::size_t entries_checked = 0;
    /// max_i |analytic_i - numeric_i| / max(‖analytic‖∞, ‖numeric‖∞)
    double relative_error = 0.0;
    double max_abs_error = 0.0;
    /// max(‖analytic‖∞, ‖numeric‖∞) over the checked entries.
    double scale = 0.0;
};

struct GradCheckReport {
    std::vector<ParamCheck> params;
    /// Worst per-parameter relative error.
    double max_relative_error() const;
    /// Largest absolute error over all parameters divided by the largest
    /// gradient entry over all parameters. Parameters whose gradients sit
    /// below the finite-difference noise floor do not dominate it.
    double global_relative_error() const;
    std::string to_string() const;
};

/// Compares reverse-mode gradients with central differences. `loss` must
/// rebuild the graph from the current parameter values on every call.
template <typename T>
GradCheckReport grad_check(const std::function<TensorT<T>()>& loss,
                           std::vector<std::pair<std::string, TensorT<T>>> params,
                           const GradCheckOptions& options = {});

}  // namespace wdnet
