#pragma once

#include "hardflow/common.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace testing {

using hardflow::Mat;
using hardflow::Vec;

inline Vec normal_vec(std::mt19937_64& rng, int n, double scale = 1.0)
{
    std::normal_distribution<double> g(0.0, scale);
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = g(rng);
    return v;
}

inline Vec uniform_vec(std::mt19937_64& rng, int n, double lo, double hi)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = u(rng);
    return v;
}

inline Vec vec(std::initializer_list<double> xs)
{
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

// central differences of a scalar function
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h)
{
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (f(xp) - f(xm)) / (2 * h);
    }
    return g;
}

// relative error with an absolute floor so tiny gradients don't blow up the ratio
inline double rel_err(const Vec& a, const Vec& b, double floor = 1e-8)
{
    return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

} // namespace testing
