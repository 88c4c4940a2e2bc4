#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "biphoton/expression.hpp"

namespace biphoton {

/// Vacuum expectation value of an operator product, together with its
/// decomposition by total coupling order. The map always sums to `value`.
struct Expectation {
    Complex value{};
    std::map<int, Complex> by_order;
};

namespace detail {

struct ElementaryOp {
    std::uint32_t mode;
    bool dagger;
};

/// Number of complete pairings of the remaining operators (given by `mask`
/// over positions in `ops`) in which every annihilator is contracted with a
/// creator of the same mode standing to its right. Each pairing contributes
/// a factor 1, so the result is a nonnegative integer count.
///
/// The recursion contracts the first remaining operator: a leading creator
/// cannot act on the bra vacuum, so it kills the whole product.
inline double contraction_count(const std::vector<ElementaryOp>& ops, std::uint32_t mask,
                                std::unordered_map<std::uint32_t, double>& memo) {
    if (mask == 0) return 1.0;
    if (auto it = memo.find(mask); it != memo.end()) return it->second;

    std::uint32_t first = 0;
    while (!(mask & (1u << first))) ++first;

    double total = 0.0;
    if (!ops[first].dagger) {
        for (std::uint32_t p = first + 1; p < ops.size(); ++p) {
            if (!(mask & (1u << p))) continue;
            if (ops[p].dagger && ops[p].mode == ops[first].mode)
                total += contraction_count(ops, mask & ~(1u << first) & ~(1u << p), memo);
        }
    }
    memo.emplace(mask, total);
    return total;
}

}  // namespace detail

/// <0| f_1 f_2 ... f_k |0> for a product of linear forms, expanded
/// multilinearly. Each monomial is settled by Wick contraction with
/// <a_m a†_n> = delta_mn, and its contribution is filed under the sum of its
/// term orders. An empty factor annihilates the product.
inline Expectation vacuum_expectation(std::span<const OperatorExpression> factors) {
    Expectation out;
    const std::size_t k = factors.size();
    if (k == 0) {
        out.value = Complex{1.0, 0.0};
        out.by_order[0] = out.value;
        return out;
    }
    if (k > 31) throw std::invalid_argument("operator product too long");
    for (const auto& f : factors)
        if (f.empty()) return out;

    std::vector<std::size_t> idx(k, 0);
    std::vector<detail::ElementaryOp> ops(k);
    const std::uint32_t full_mask = (1u << k) - 1u;

    for (;;) {
        Complex coeff{1.0, 0.0};
        int order = 0;
        for (std::size_t i = 0; i < k; ++i) {
            const OperatorTerm& t = factors[i].terms()[idx[i]];
            coeff *= t.coeff;
            order += t.order;
            ops[i] = detail::ElementaryOp{t.mode.value, t.dagger};
        }

        std::unordered_map<std::uint32_t, double> memo;
        double count = detail::contraction_count(ops, full_mask, memo);
        if (count != 0.0) out.by_order[order] += coeff * count;

        std::size_t i = 0;
        while (i < k && ++idx[i] == factors[i].terms().size()) idx[i++] = 0;
        if (i == k) break;
    }

    for (const auto& [order, v] : out.by_order) out.value += v;
    return out;
}

inline Expectation vacuum_expectation(std::initializer_list<OperatorExpression> factors) {
    std::vector<OperatorExpression> v(factors);
    return vacuum_expectation(std::span<const OperatorExpression>(v));
}

/// Keep only contributions up to the given total order.
inline Expectation filter_by_order(const Expectation& e, int max_total_order) {
    Expectation out;
    for (const auto& [order, v] : e.by_order) {
        if (order <= max_total_order) {
            out.by_order[order] = v;
            out.value += v;
        }
    }
    return out;
}

}  // namespace biphoton
