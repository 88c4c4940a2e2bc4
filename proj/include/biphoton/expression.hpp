#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <tuple>
#include <vector>

#include "biphoton/modes.hpp"

namespace biphoton {

using Complex = std::complex<double>;

/// Coefficients whose magnitude falls below this after a merge are dropped.
inline constexpr double kCoeffEpsilon = 1e-15;

/// One summand of a linear operator form: coeff * a_mode (dagger = false) or
/// coeff * a†_mode (dagger = true). `order` counts how many pump couplings
/// the term has absorbed; free vacuum operators carry order 0.
struct OperatorTerm {
    ModeId mode;
    bool dagger = false;
    Complex coeff{};
    int order = 0;
};

/// A linear form in mode operators, kept in a canonical shape: terms sorted
/// by (mode, dagger, order), at most one term per such triple, and near-zero
/// coefficients pruned. Closed under the linear-optics transformations used
/// by the network layer, and under adjoint and order filtering.
class OperatorExpression {
public:
    OperatorExpression() = default;

    /// The bare annihilation operator of a canonical mode, order 0.
    static OperatorExpression annihilator(ModeId m) {
        OperatorExpression e;
        e.terms_.push_back(OperatorTerm{m, false, Complex{1.0, 0.0}, 0});
        return e;
    }

    void add(ModeId mode, bool dagger, Complex coeff, int order) {
        auto key = std::make_tuple(mode.value, dagger, order);
        auto it = std::lower_bound(terms_.begin(), terms_.end(), key,
                                   [](const OperatorTerm& t, const auto& k) {
                                       return term_key(t) < k;
                                   });
        if (it != terms_.end() && term_key(*it) == key) {
            it->coeff += coeff;
            if (std::abs(it->coeff) < kCoeffEpsilon) terms_.erase(it);
        } else if (std::abs(coeff) >= kCoeffEpsilon) {
            terms_.insert(it, OperatorTerm{mode, dagger, coeff, order});
        }
    }

    OperatorExpression& operator+=(const OperatorExpression& other) {
        for (const auto& t : other.terms_) add(t.mode, t.dagger, t.coeff, t.order);
        return *this;
    }

    friend OperatorExpression operator+(OperatorExpression a, const OperatorExpression& b) {
        a += b;
        return a;
    }

    OperatorExpression& operator*=(Complex c) {
        if (std::abs(c) < kCoeffEpsilon) {
            terms_.clear();
            return *this;
        }
        for (auto& t : terms_) t.coeff *= c;
        return *this;
    }

    friend OperatorExpression operator*(Complex c, OperatorExpression e) {
        e *= c;
        return e;
    }

    /// Hermitian adjoint: a <-> a†, coefficients conjugated, orders kept.
    OperatorExpression adjoint() const {
        OperatorExpression out;
        out.terms_.reserve(terms_.size());
        for (const auto& t : terms_)
            out.terms_.push_back(OperatorTerm{t.mode, !t.dagger, std::conj(t.coeff), t.order});
        out.resort();
        return out;
    }

    /// Drop every term above the given coupling order.
    OperatorExpression filtered(int max_order) const {
        OperatorExpression out;
        for (const auto& t : terms_)
            if (t.order <= max_order) out.terms_.push_back(t);
        return out;
    }

    /// Coefficient of the (mode, dagger, order) term, zero if absent.
    Complex coefficient(ModeId mode, bool dagger, int order) const {
        auto key = std::make_tuple(mode.value, dagger, order);
        auto it = std::lower_bound(terms_.begin(), terms_.end(), key,
                                   [](const OperatorTerm& t, const auto& k) {
                                       return term_key(t) < k;
                                   });
        if (it != terms_.end() && term_key(*it) == key) return it->coeff;
        return Complex{};
    }

    std::span<const OperatorTerm> terms() const { return terms_; }

    bool empty() const { return terms_.empty(); }
    std::size_t size() const { return terms_.size(); }

    int max_order() const {
        int m = 0;
        for (const auto& t : terms_) m = std::max(m, t.order);
        return m;
    }

private:
    static std::tuple<std::uint32_t, bool, int> term_key(const OperatorTerm& t) {
        return {t.mode.value, t.dagger, t.order};
    }

    void resort() {
        std::sort(terms_.begin(), terms_.end(), [](const OperatorTerm& a, const OperatorTerm& b) {
            return term_key(a) < term_key(b);
        });
    }

    std::vector<OperatorTerm> terms_;
};

}  // namespace biphoton
