#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ammpl/array.hpp"
#include "ammpl/autodiff.hpp"

namespace ammpl {

struct FdOptions {
    double step = 1e-5;
    double rel_tol = 1e-4;
    /// Differences below this absolute level always pass.
    double abs_floor = 1e-6;
};

struct ParamDeviation {
    double max_abs_error = 0.0;
    /// max |ad - fd| / max(|fd|, abs_floor / rel_tol)
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    bool passed = true;
};

struct FdReport {
    std::vector<ParamDeviation> params;

    bool passed() const;
    double max_rel_error() const;
};

/// Builds a scalar loss on a fresh tape from leaf Vars holding the parameters.
/// Must be deterministic: any randomness has to come from streams that are
/// re-created inside the function.
using ScalarFn = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

/// Reverse-mode gradient of `fn` at `params` versus central differences.
FdReport finite_difference_check(const ScalarFn& fn, std::span<const Array> params,
                                 const FdOptions& opts = {});

/// Reverse-mode gradients only, one per parameter.
std::vector<Array> reverse_gradients(const ScalarFn& fn, std::span<const Array> params);

}  // namespace ammpl
