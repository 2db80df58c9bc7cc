#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nr/dataset.hpp"
#include "nr/network.hpp"

namespace nr {

// KL( Dir(phi) || Dir(alpha0 * 1) ):
//   lgamma(sum phi) - lgamma(D*alpha0) - sum lgamma(phi_j) + D*lgamma(alpha0)
//   + sum (phi_j - alpha0) * (psi(phi_j) - psi(sum phi))
double kl_dirichlet(std::span<const double> phi, double alpha0);
std::vector<double> kl_dirichlet_grad(std::span<const double> phi, double alpha0);

// s~_j = phi_j / sum phi
std::vector<double> posterior_mean(std::span<const double> phi);

// Asymmetric Dirichlet posterior over one layer's importance switch.
struct SwitchPosterior {
    int layer_index = -1;
    std::vector<double> phi;  // elementwise positive
};

std::vector<int> rank_from_switch(const SwitchPosterior& posterior);

// softplus reparameterization keeping phi > 0 while optimizing rho freely
inline double softplus(double rho) { return rho > 30.0 ? rho : std::log1p(std::exp(rho)); }
inline double softplus_inv(double phi) { return phi > 30.0 ? phi : std::log(std::expm1(phi)); }
inline double sigmoid(double rho) { return 1.0 / (1.0 + std::exp(-rho)); }

// One evaluation of the negative-ELBO objective and its gradient w.r.t. the
// unconstrained rho, on a single batch:
//   loss = data_scale * CE(batch; switch = s~) + KL(phi || alpha0),
// phi = softplus(rho), s~ = phi / sum(phi). Weights stay frozen. Templated
// so the gradient check can run the whole path in double.
template <typename T>
struct SwitchStep {
    double loss = 0.0;
    double cross_entropy = 0.0;  // batch mean
    double kl = 0.0;
    std::vector<double> grad_rho;
};

template <typename T>
SwitchStep<T> switch_loss_grad(const Network<T>& net, const Tensor<T>& batch, const std::vector<int>& labels,
                               int layer_index, const std::vector<double>& rho, double alpha0, double data_scale);

struct SwitchTrainOptions {
    int epochs = 300;
    int batch_size = 128;
    double alpha0 = 0.1;
    double lr = 0.01;
    std::uint64_t seed = 0;
    // cache threshold for the frozen prefix activations, in MB
    int prefix_cache_mb = 512;
};

struct SwitchTrainResult {
    SwitchPosterior posterior;
    std::vector<double> elbo_history;  // one entry per epoch
};

// Trains the importance switch of one layer with all network weights frozen,
// maximizing the ELBO with the posterior-mean point estimate of the
// likelihood term. Layers below the switch are evaluated once and cached
// when they fit the budget.
SwitchTrainResult train_switch_layer(const NetworkF& net, int layer_index, const DataSource& train_data,
                                     const SwitchTrainOptions& opts);

}  // namespace nr
