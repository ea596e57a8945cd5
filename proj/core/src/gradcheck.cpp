#include "ammpl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ammpl {

bool FdReport::passed() const {
    return std::all_of(params.begin(), params.end(), [](const auto& p) { return p.passed; });
}

double FdReport::max_rel_error() const {
    double m = 0.0;
    for (const auto& p : params) m = std::max(m, p.max_rel_error);
    return m;
}

namespace {

double evaluate(const ScalarFn& fn, std::span<const Array> params) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    return fn(tape, leaves).value().item();
}

}  // namespace

std::vector<Array> reverse_gradients(const ScalarFn& fn, std::span<const Array> params) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    const ad::Var loss = fn(tape, leaves);
    auto grads = tape.backward(loss, leaves);
    std::vector<Array> out;
    out.reserve(leaves.size());
    for (const auto& l : leaves) out.push_back(std::move(grads.at(l.id())));
    return out;
}

FdReport finite_difference_check(const ScalarFn& fn, std::span<const Array> params,
                                 const FdOptions& opts) {
    const auto analytic = reverse_gradients(fn, params);
    std::vector<Array> work(params.begin(), params.end());
    const double denom_floor = opts.abs_floor / opts.rel_tol;

    FdReport report;
    for (std::size_t p = 0; p < work.size(); ++p) {
        ParamDeviation dev;
        for (std::size_t i = 0; i < work[p].size(); ++i) {
            const double orig = work[p][i];
            work[p][i] = orig + opts.step;
            const double up = evaluate(fn, work);
            work[p][i] = orig - opts.step;
            const double down = evaluate(fn, work);
            work[p][i] = orig;
            const double fd = (up - down) / (2.0 * opts.step);
            const double err = std::abs(analytic[p][i] - fd);
            const double rel = err / std::max(std::abs(fd), denom_floor);
            if (rel > dev.max_rel_error) {
                dev.max_rel_error = rel;
                dev.worst_index = i;
            }
            dev.max_abs_error = std::max(dev.max_abs_error, err);
        }
        dev.passed = dev.max_rel_error <= opts.rel_tol;
        report.params.push_back(dev);
    }
    return report;
}

}  // namespace ammpl
