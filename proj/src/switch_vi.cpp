#include "nr/switch_vi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nr/shapley.hpp"
#include "nr/specfun.hpp"

namespace nr {

double kl_dirichlet(std::span<const double> phi, double alpha0) {
    if (!(alpha0 > 0.0)) throw InputError("kl_dirichlet: alpha0 must be > 0");
    const int d = static_cast<int>(phi.size());
    double sum_phi = 0.0;
    for (double p : phi) {
        if (!(p > 0.0)) throw InputError("kl_dirichlet: phi must be elementwise > 0");
        sum_phi += p;
    }
    double kl = std::lgamma(sum_phi) - std::lgamma(d * alpha0) + d * std::lgamma(alpha0);
    const double psi_sum = digamma(sum_phi);
    for (double p : phi) kl += -std::lgamma(p) + (p - alpha0) * (digamma(p) - psi_sum);
    return kl;
}

std::vector<double> kl_dirichlet_grad(std::span<const double> phi, double alpha0) {
    const int d = static_cast<int>(phi.size());
    double sum_phi = 0.0;
    for (double p : phi) {
        if (!(p > 0.0)) throw InputError("kl_dirichlet_grad: phi must be elementwise > 0");
        sum_phi += p;
    }
    // d/dphi_k = (phi_k - alpha0) psi'(phi_k) - psi'(sum phi) (sum phi - d*alpha0)
    const double tri_sum = trigamma(sum_phi);
    const double excess = sum_phi - d * alpha0;
    std::vector<double> g(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k)
        g[static_cast<std::size_t>(k)] = (phi[static_cast<std::size_t>(k)] - alpha0) * trigamma(phi[static_cast<std::size_t>(k)]) - tri_sum * excess;
    return g;
}

std::vector<double> posterior_mean(std::span<const double> phi) {
    double sum = 0.0;
    for (double p : phi) {
        if (!(p > 0.0)) throw InputError("posterior_mean: phi must be elementwise > 0");
        sum += p;
    }
    std::vector<double> s(phi.size());
    for (std::size_t j = 0; j < phi.size(); ++j) s[j] = phi[j] / sum;
    return s;
}

std::vector<int> rank_from_switch(const SwitchPosterior& posterior) { return rank_players(posterior.phi); }

template <typename T>
SwitchStep<T> switch_loss_grad(const Network<T>& net, const Tensor<T>& batch, const std::vector<int>& labels,
                               int layer_index, const std::vector<double>& rho, double alpha0, double data_scale) {
    const int d = static_cast<int>(rho.size());
    if (d != net.units_at(layer_index)) throw ShapeError("rho length does not match layer width");

    std::vector<double> phi(static_cast<std::size_t>(d));
    double sum_phi = 0.0;
    for (int j = 0; j < d; ++j) {
        phi[static_cast<std::size_t>(j)] = softplus(rho[static_cast<std::size_t>(j)]);
        sum_phi += phi[static_cast<std::size_t>(j)];
    }
    std::vector<double> s = posterior_mean(phi);

    LayerSwitch<T> sw;
    sw.layer_index = layer_index;
    sw.values.resize(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) sw.values[static_cast<std::size_t>(j)] = static_cast<T>(s[static_cast<std::size_t>(j)]);

    Gradients<T> g = backward(net, batch, labels, {}, {sw}, layer_index, /*want_params=*/false);
    const auto& ds = g.dswitch.at(layer_index);

    SwitchStep<T> out;
    out.cross_entropy = g.loss;
    out.kl = kl_dirichlet(phi, alpha0);
    out.loss = data_scale * g.loss + out.kl;

    // chain: dCE/ds -> ds/dphi (normalization Jacobian) -> dphi/drho (sigmoid)
    std::vector<double> kl_grad = kl_dirichlet_grad(phi, alpha0);
    double dot = 0.0;
    for (int j = 0; j < d; ++j) dot += static_cast<double>(ds[static_cast<std::size_t>(j)]) * s[static_cast<std::size_t>(j)];
    out.grad_rho.resize(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        const double dphi =
            data_scale * (static_cast<double>(ds[static_cast<std::size_t>(j)]) - dot) / sum_phi + kl_grad[static_cast<std::size_t>(j)];
        out.grad_rho[static_cast<std::size_t>(j)] = dphi * sigmoid(rho[static_cast<std::size_t>(j)]);
    }
    return out;
}

template SwitchStep<float> switch_loss_grad<float>(const Network<float>&, const Tensor<float>&, const std::vector<int>&,
                                                   int, const std::vector<double>&, double, double);
template SwitchStep<double> switch_loss_grad<double>(const Network<double>&, const Tensor<double>&,
                                                     const std::vector<int>&, int, const std::vector<double>&, double,
                                                     double);

SwitchTrainResult train_switch_layer(const NetworkF& net, int layer_index, const DataSource& train_data,
                                     const SwitchTrainOptions& opts) {
    const int d = net.units_at(layer_index);
    if (d == 0) throw InputError("layer " + std::to_string(layer_index) + " is not maskable");
    if (!(opts.alpha0 > 0.0)) throw InputError("alpha0 must be > 0");

    SwitchTrainResult result;
    result.posterior.layer_index = layer_index;
    result.posterior.phi.assign(static_cast<std::size_t>(d), opts.alpha0);
    if (opts.epochs <= 0) return result;

    // Split the network at the switch layer; everything below is frozen and
    // mask-independent, so its activations can be computed once.
    NetworkF prefix, subnet;
    prefix.input_shape = net.input_shape;
    prefix.num_classes = net.num_classes;
    const auto shapes = trace_shapes(net);
    for (int li = 0; li < layer_index; ++li) prefix.layers.push_back(net.layer(li));
    subnet.input_shape = layer_index == 0 ? net.input_shape : shapes[static_cast<std::size_t>(layer_index - 1)];
    subnet.num_classes = net.num_classes;
    for (int li = layer_index; li < net.num_layers(); ++li) subnet.layers.push_back(net.layer(li));

    const std::int64_t n = train_data.size();
    std::int64_t prefix_elems = 1;
    for (int dd : subnet.input_shape) prefix_elems *= dd;
    const bool cache_prefix =
        !prefix.layers.empty() &&
        (n * prefix_elems * static_cast<std::int64_t>(sizeof(float))) <= static_cast<std::int64_t>(opts.prefix_cache_mb) * 1024 * 1024;

    std::unique_ptr<TensorSource> cached;
    if (cache_prefix) {
        std::vector<int> shape{static_cast<int>(n)};
        shape.insert(shape.end(), subnet.input_shape.begin(), subnet.input_shape.end());
        Tensor<float> all(shape);
        std::vector<int> labels(static_cast<std::size_t>(n));
        const int bs = 512;
        for (std::int64_t lo = 0; lo < n; lo += bs) {
            const std::int64_t hi = std::min(n, lo + bs);
            std::vector<std::int64_t> idx(static_cast<std::size_t>(hi - lo));
            std::iota(idx.begin(), idx.end(), lo);
            Tensor<float> out = forward(prefix, train_data.make_batch(idx));
            std::copy(out.data.begin(), out.data.end(), all.data.begin() + lo * prefix_elems);
            for (std::int64_t i = lo; i < hi; ++i) labels[static_cast<std::size_t>(i)] = train_data.label(i);
        }
        cached = std::make_unique<TensorSource>(std::move(all), std::move(labels));
    }
    const DataSource& sub_data = cached ? static_cast<const DataSource&>(*cached) : train_data;
    const bool through_prefix = !cache_prefix && !prefix.layers.empty();

    std::vector<double> rho(static_cast<std::size_t>(d), softplus_inv(opts.alpha0));
    std::mt19937_64 rng(opts.seed);
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const double data_scale = static_cast<double>(n);

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double ce_sum = 0.0;
        double kl_last = 0.0;
        for (std::int64_t lo = 0; lo < n; lo += opts.batch_size) {
            const std::int64_t hi = std::min(n, lo + opts.batch_size);
            std::vector<std::int64_t> idx(order.begin() + lo, order.begin() + hi);
            Tensor<float> batch = sub_data.make_batch(idx);
            if (through_prefix) batch = forward(prefix, batch);
            std::vector<int> labels = sub_data.gather_labels(idx);

            SwitchStep<float> step = switch_loss_grad(subnet, batch, labels, 0, rho, opts.alpha0, data_scale);
            if (!std::isfinite(step.loss))
                throw NumericError("switch training diverged at epoch " + std::to_string(epoch));
            for (int j = 0; j < d; ++j) rho[static_cast<std::size_t>(j)] -= opts.lr * step.grad_rho[static_cast<std::size_t>(j)];
            ce_sum += step.cross_entropy * static_cast<double>(hi - lo);
            kl_last = step.kl;
        }
        result.elbo_history.push_back(-(data_scale * ce_sum / static_cast<double>(n) + kl_last));
    }

    for (int j = 0; j < d; ++j) result.posterior.phi[static_cast<std::size_t>(j)] = softplus(rho[static_cast<std::size_t>(j)]);
    return result;
}

}  // namespace nr
