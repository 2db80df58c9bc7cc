#include "nr/specfun.hpp"

#include <cmath>
#include <stdexcept>

namespace nr {

double digamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("digamma: x must be > 0");
    double result = 0.0;
    while (x < 8.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    // psi(x) ~ ln x - 1/(2x) - sum B_{2n} / (2n x^{2n})
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv;
    result -= inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    return result;
}

double trigamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("trigamma: x must be > 0");
    double result = 0.0;
    while (x < 8.0) {
        result += 1.0 / (x * x);
        x += 1.0;
    }
    // psi'(x) ~ 1/x + 1/(2x^2) + sum B_{2n} / x^{2n+1}
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += inv * (1.0 + 0.5 * inv + inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0)))));
    return result;
}

}  // namespace nr
