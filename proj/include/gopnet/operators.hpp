#pragma once

// Operator libraries for generalized operational perceptrons. A neuron is the
// composition of a nodal transform applied per input, a pooling reduction and
// an activation, each drawn from the finite libraries below. Every operator
// ships with its closed-form partial derivatives so networks can be trained
// by backpropagation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gopnet/errors.hpp"

namespace gopnet {

enum class NodalOp : std::uint8_t { Mul, Exp, Harmonic, Quad, Gauss, Dog };
enum class PoolOp : std::uint8_t { Sum, Corr1, Corr2, Max };
enum class ActOp : std::uint8_t { Tanh, Relu, Lincut };

inline constexpr int kNodalOpCount = 6;
inline constexpr int kPoolOpCount = 4;
inline constexpr int kActOpCount = 3;
inline constexpr int kOperatorSetCount = kNodalOpCount * kPoolOpCount * kActOpCount;

// Exponent argument clip for the exp nodal, keeping outputs finite for any
// sane weight/input range.
inline constexpr double kExpArgClip = 10.0;

namespace detail {
inline void check_op(bool ok, const char* library) {
    if (!ok) throw DomainError(std::string("operator id outside the ") + library + " library");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Nodal operators: y = psi(x, w)
//
// Each operator exists once, as a compile-time template; the runtime-dispatch
// functions below and the hot evaluation kernels (network.hpp) share these
// definitions, so both paths compute identical values.

struct NodalPartials {
    double dw;  // d psi / d w
    double dx;  // d psi / d x
};

// Value and partials in one evaluation; the backward pass uses this to avoid
// recomputing the shared exponentials.
struct NodalEval {
    double y;
    double dw;
    double dx;
};

template <NodalOp op>
inline double nodal_forward_t(double x, double w) {
    if constexpr (op == NodalOp::Mul) {
        return w * x;
    } else if constexpr (op == NodalOp::Exp) {
        return std::exp(std::clamp(w * x, -kExpArgClip, kExpArgClip)) - 1.0;
    } else if constexpr (op == NodalOp::Harmonic) {
        return std::sin(w * x);
    } else if constexpr (op == NodalOp::Quad) {
        return w * x * x;
    } else if constexpr (op == NodalOp::Gauss) {
        return w * std::exp(-w * w * x * x);
    } else {
        static_assert(op == NodalOp::Dog);
        return w * x * std::exp(-w * w * x * x);
    }
}

// Partials of the forms above. The exp nodal differentiates e^{wx} - 1 at the
// clipped argument, which keeps gradients bounded without zeroing them.
template <NodalOp op>
inline NodalEval nodal_eval_t(double x, double w) {
    if constexpr (op == NodalOp::Mul) {
        return {w * x, x, w};
    } else if constexpr (op == NodalOp::Exp) {
        const double e = std::exp(std::clamp(w * x, -kExpArgClip, kExpArgClip));
        return {e - 1.0, x * e, w * e};
    } else if constexpr (op == NodalOp::Harmonic) {
        const double a = w * x;
        const double c = std::cos(a);
        return {std::sin(a), x * c, w * c};
    } else if constexpr (op == NodalOp::Quad) {
        return {w * x * x, x * x, 2.0 * w * x};
    } else if constexpr (op == NodalOp::Gauss) {
        const double g = std::exp(-w * w * x * x);
        return {w * g, g * (1.0 - 2.0 * w * w * x * x), -2.0 * w * w * w * x * g};
    } else {
        static_assert(op == NodalOp::Dog);
        const double g = std::exp(-w * w * x * x);
        const double shape = 1.0 - 2.0 * w * w * x * x;
        return {w * x * g, x * g * shape, w * g * shape};
    }
}

inline double nodal_forward(NodalOp op, double x, double w) {
    switch (op) {
        case NodalOp::Mul:
            return nodal_forward_t<NodalOp::Mul>(x, w);
        case NodalOp::Exp:
            return nodal_forward_t<NodalOp::Exp>(x, w);
        case NodalOp::Harmonic:
            return nodal_forward_t<NodalOp::Harmonic>(x, w);
        case NodalOp::Quad:
            return nodal_forward_t<NodalOp::Quad>(x, w);
        case NodalOp::Gauss:
            return nodal_forward_t<NodalOp::Gauss>(x, w);
        case NodalOp::Dog:
            return nodal_forward_t<NodalOp::Dog>(x, w);
    }
    detail::check_op(false, "nodal");
    return 0.0;
}

inline NodalEval nodal_eval(NodalOp op, double x, double w) {
    switch (op) {
        case NodalOp::Mul:
            return nodal_eval_t<NodalOp::Mul>(x, w);
        case NodalOp::Exp:
            return nodal_eval_t<NodalOp::Exp>(x, w);
        case NodalOp::Harmonic:
            return nodal_eval_t<NodalOp::Harmonic>(x, w);
        case NodalOp::Quad:
            return nodal_eval_t<NodalOp::Quad>(x, w);
        case NodalOp::Gauss:
            return nodal_eval_t<NodalOp::Gauss>(x, w);
        case NodalOp::Dog:
            return nodal_eval_t<NodalOp::Dog>(x, w);
    }
    detail::check_op(false, "nodal");
    return {0.0, 0.0, 0.0};
}

inline NodalPartials nodal_partials(NodalOp op, double x, double w) {
    const NodalEval e = nodal_eval(op, x, w);
    return {e.dw, e.dx};
}

// ---------------------------------------------------------------------------
// Pooling operators: z = rho(y_1..y_K); the bias is added by the caller.

template <PoolOp op>
inline double pool_forward_t(std::span<const double> y) {
    const std::size_t k = y.size();
    if constexpr (op == PoolOp::Sum) {
        double acc = 0.0;
        for (double v : y) acc += v;
        return acc;
    } else if constexpr (op == PoolOp::Corr1) {
        double acc = 0.0;  // empty when k == 1
        for (std::size_t i = 0; i + 1 < k; ++i) acc += y[i] * y[i + 1];
        return acc;
    } else if constexpr (op == PoolOp::Corr2) {
        double acc = 0.0;  // empty when k < 3
        for (std::size_t i = 0; i + 2 < k; ++i) acc += y[i] * y[i + 1] * y[i + 2];
        return acc;
    } else {
        static_assert(op == PoolOp::Max);
        double best = y[0];
        for (double v : y) best = std::max(best, v);
        return best;
    }
}

// Writes d z / d y_k into `out` (same length as y). Max pooling routes the
// full gradient to the lowest-index maximizer.
template <PoolOp op>
inline void pool_partials_t(std::span<const double> y, std::span<double> out) {
    const std::size_t k = y.size();
    if constexpr (op == PoolOp::Sum) {
        std::fill(out.begin(), out.end(), 1.0);
    } else if constexpr (op == PoolOp::Corr1) {
        for (std::size_t i = 0; i < k; ++i) {
            double g = 0.0;
            if (i > 0) g += y[i - 1];
            if (i + 1 < k) g += y[i + 1];
            out[i] = g;
        }
    } else if constexpr (op == PoolOp::Corr2) {
        for (std::size_t i = 0; i < k; ++i) {
            double g = 0.0;
            if (i + 2 < k) g += y[i + 1] * y[i + 2];
            if (i >= 1 && i + 1 < k) g += y[i - 1] * y[i + 1];
            if (i >= 2) g += y[i - 2] * y[i - 1];
            out[i] = g;
        }
    } else {
        static_assert(op == PoolOp::Max);
        std::size_t best = 0;
        for (std::size_t i = 1; i < k; ++i)
            if (y[i] > y[best]) best = i;
        std::fill(out.begin(), out.end(), 0.0);
        out[best] = 1.0;
    }
}

inline double pool_forward(PoolOp op, std::span<const double> y) {
    if (y.empty()) throw DomainError("pool_forward: empty input vector");
    switch (op) {
        case PoolOp::Sum:
            return pool_forward_t<PoolOp::Sum>(y);
        case PoolOp::Corr1:
            return pool_forward_t<PoolOp::Corr1>(y);
        case PoolOp::Corr2:
            return pool_forward_t<PoolOp::Corr2>(y);
        case PoolOp::Max:
            return pool_forward_t<PoolOp::Max>(y);
    }
    detail::check_op(false, "pooling");
    return 0.0;
}

inline void pool_partials(PoolOp op, std::span<const double> y, std::span<double> out) {
    if (y.empty()) throw DomainError("pool_partials: empty input vector");
    if (out.size() != y.size()) throw DimensionError("pool_partials: output size mismatch");
    switch (op) {
        case PoolOp::Sum:
            return pool_partials_t<PoolOp::Sum>(y, out);
        case PoolOp::Corr1:
            return pool_partials_t<PoolOp::Corr1>(y, out);
        case PoolOp::Corr2:
            return pool_partials_t<PoolOp::Corr2>(y, out);
        case PoolOp::Max:
            return pool_partials_t<PoolOp::Max>(y, out);
    }
    detail::check_op(false, "pooling");
}

// ---------------------------------------------------------------------------
// Activations: t = f(z)

template <ActOp op>
inline double activate_t(double z) {
    if constexpr (op == ActOp::Tanh) {
        return std::tanh(z);
    } else if constexpr (op == ActOp::Relu) {
        return z > 0.0 ? z : 0.0;
    } else {
        static_assert(op == ActOp::Lincut);
        return std::clamp(z, -1.0, 1.0);
    }
}

// Subgradient conventions: relu takes 0 at z = 0, lincut takes 0 at |z| = 1.
template <ActOp op>
inline double activate_partial_t(double z) {
    if constexpr (op == ActOp::Tanh) {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    } else if constexpr (op == ActOp::Relu) {
        return z > 0.0 ? 1.0 : 0.0;
    } else {
        static_assert(op == ActOp::Lincut);
        return std::abs(z) < 1.0 ? 1.0 : 0.0;
    }
}

inline double activate(ActOp op, double z) {
    switch (op) {
        case ActOp::Tanh:
            return activate_t<ActOp::Tanh>(z);
        case ActOp::Relu:
            return activate_t<ActOp::Relu>(z);
        case ActOp::Lincut:
            return activate_t<ActOp::Lincut>(z);
    }
    detail::check_op(false, "activation");
    return 0.0;
}

inline double activate_partial(ActOp op, double z) {
    switch (op) {
        case ActOp::Tanh:
            return activate_partial_t<ActOp::Tanh>(z);
        case ActOp::Relu:
            return activate_partial_t<ActOp::Relu>(z);
        case ActOp::Lincut:
            return activate_partial_t<ActOp::Lincut>(z);
    }
    detail::check_op(false, "activation");
    return 0.0;
}

// ---------------------------------------------------------------------------
// Operator sets

struct OperatorSet {
    NodalOp nodal;
    PoolOp pool;
    ActOp act;

    friend bool operator==(const OperatorSet&, const OperatorSet&) = default;
};

inline constexpr std::array<std::string_view, kNodalOpCount> kNodalNames = {
    "mul", "exp", "harmonic", "quad", "gauss", "dog"};
inline constexpr std::array<std::string_view, kPoolOpCount> kPoolNames = {
    "sum", "corr1", "corr2", "max"};
inline constexpr std::array<std::string_view, kActOpCount> kActNames = {
    "tanh", "relu", "lincut"};

inline std::string_view nodal_name(NodalOp op) { return kNodalNames[static_cast<int>(op)]; }
inline std::string_view pool_name(PoolOp op) { return kPoolNames[static_cast<int>(op)]; }
inline std::string_view act_name(ActOp op) { return kActNames[static_cast<int>(op)]; }

namespace detail {
template <typename Enum, std::size_t N>
Enum from_name(const std::array<std::string_view, N>& names, std::string_view name,
               const char* library) {
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == name) return static_cast<Enum>(i);
    throw UnknownOperatorError(std::string("unknown ") + library + " operator: \"" +
                               std::string(name) + "\"");
}
}  // namespace detail

inline NodalOp nodal_from_name(std::string_view name) {
    return detail::from_name<NodalOp>(kNodalNames, name, "nodal");
}
inline PoolOp pool_from_name(std::string_view name) {
    return detail::from_name<PoolOp>(kPoolNames, name, "pooling");
}
inline ActOp act_from_name(std::string_view name) {
    return detail::from_name<ActOp>(kActNames, name, "activation");
}

// "mul/sum/tanh" style label for logs and reports.
inline std::string opset_label(const OperatorSet& s) {
    return std::string(nodal_name(s.nodal)) + "/" + std::string(pool_name(s.pool)) + "/" +
           std::string(act_name(s.act));
}

// Position of an operator set in the enumeration below.
inline int opset_index(const OperatorSet& s) {
    return (static_cast<int>(s.nodal) * kPoolOpCount + static_cast<int>(s.pool)) * kActOpCount +
           static_cast<int>(s.act);
}

// Converts the runtime operator choice of a block into compile-time template
// arguments, so evaluation kernels dispatch once per matrix instead of once
// per scalar. The functor is invoked as f(OpsetTag<nodal, pool, act>{}).
template <NodalOp N, PoolOp P, ActOp A>
struct OpsetTag {
    static constexpr NodalOp nodal = N;
    static constexpr PoolOp pool = P;
    static constexpr ActOp act = A;
};

namespace detail {

template <NodalOp N, PoolOp P, typename F>
decltype(auto) dispatch_act(ActOp a, F&& f) {
    switch (a) {
        case ActOp::Tanh:
            return f(OpsetTag<N, P, ActOp::Tanh>{});
        case ActOp::Relu:
            return f(OpsetTag<N, P, ActOp::Relu>{});
        case ActOp::Lincut:
            return f(OpsetTag<N, P, ActOp::Lincut>{});
    }
    check_op(false, "activation");
    return f(OpsetTag<N, P, ActOp::Tanh>{});
}

template <NodalOp N, typename F>
decltype(auto) dispatch_pool_act(PoolOp p, ActOp a, F&& f) {
    switch (p) {
        case PoolOp::Sum:
            return dispatch_act<N, PoolOp::Sum>(a, f);
        case PoolOp::Corr1:
            return dispatch_act<N, PoolOp::Corr1>(a, f);
        case PoolOp::Corr2:
            return dispatch_act<N, PoolOp::Corr2>(a, f);
        case PoolOp::Max:
            return dispatch_act<N, PoolOp::Max>(a, f);
    }
    check_op(false, "pooling");
    return dispatch_act<N, PoolOp::Sum>(a, f);
}

}  // namespace detail

template <typename F>
decltype(auto) dispatch_opset(const OperatorSet& s, F&& f) {
    switch (s.nodal) {
        case NodalOp::Mul:
            return detail::dispatch_pool_act<NodalOp::Mul>(s.pool, s.act, f);
        case NodalOp::Exp:
            return detail::dispatch_pool_act<NodalOp::Exp>(s.pool, s.act, f);
        case NodalOp::Harmonic:
            return detail::dispatch_pool_act<NodalOp::Harmonic>(s.pool, s.act, f);
        case NodalOp::Quad:
            return detail::dispatch_pool_act<NodalOp::Quad>(s.pool, s.act, f);
        case NodalOp::Gauss:
            return detail::dispatch_pool_act<NodalOp::Gauss>(s.pool, s.act, f);
        case NodalOp::Dog:
            return detail::dispatch_pool_act<NodalOp::Dog>(s.pool, s.act, f);
    }
    detail::check_op(false, "nodal");
    return detail::dispatch_pool_act<NodalOp::Mul>(s.pool, s.act, f);
}

// All 72 operator sets in nodal-major lexicographic order; the order is part
// of the search contract (ties break toward earlier entries).
inline std::vector<OperatorSet> enumerate_operator_sets() {
    std::vector<OperatorSet> sets;
    sets.reserve(kOperatorSetCount);
    for (int n = 0; n < kNodalOpCount; ++n)
        for (int p = 0; p < kPoolOpCount; ++p)
            for (int a = 0; a < kActOpCount; ++a)
                sets.push_back({static_cast<NodalOp>(n), static_cast<PoolOp>(p),
                                static_cast<ActOp>(a)});
    return sets;
}

}  // namespace gopnet
