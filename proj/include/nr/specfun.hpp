#pragma once

namespace nr {

// Digamma psi(x) and trigamma psi'(x) for x > 0.
// Upward recurrence into the asymptotic regime, then the standard
// Bernoulli-series expansions. Absolute accuracy is ~1e-12 over the
// parameter ranges used here (Dirichlet concentrations).
double digamma(double x);
double trigamma(double x);

}  // namespace nr
