#ifndef ICONIC_MLP_HPP
#define ICONIC_MLP_HPP

#include "iconic/core.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace iconic {

// Self-normalizing linear unit constants.
inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kSeluScale = 1.0507009873554805;

inline double selu(double x) {
    return x > 0.0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x);
}

/// Derivative of selu; at x = 0 the right-hand slope is used.
inline double selu_derivative(double x) {
    return x >= 0.0 ? kSeluScale : kSeluScale * kSeluAlpha * std::exp(x);
}

/// Logistic function, kept strictly inside (0, 1).
inline double sigmoid(double x) {
    constexpr double kLow = std::numeric_limits<double>::min();
    constexpr double kHigh = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    double s = 0.0;
    if (x >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    return std::clamp(s, kLow, kHigh);
}

enum class Activation { Selu, Identity, Sigmoid };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Selu: return "selu";
        case Activation::Identity: return "identity";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "?";
}

inline Activation activation_from_string(std::string_view s) {
    if (s == "selu") return Activation::Selu;
    if (s == "identity") return Activation::Identity;
    if (s == "sigmoid") return Activation::Sigmoid;
    throw DataError("unknown activation '" + std::string(s) + "'");
}

/// Fully connected layer: out = act(weight * in + bias).
struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
    Activation activation = Activation::Identity;

    bool operator==(const Layer& o) const {
        return activation == o.activation && weight.rows() == o.weight.rows() &&
               weight.cols() == o.weight.cols() && weight == o.weight && bias.size() == o.bias.size() &&
               bias == o.bias;
    }
};

/// Parameters of one Siamese twin. Also used as the gradient container.
struct MlpParams {
    std::vector<Layer> layers;

    std::size_t input_dim() const {
        return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols());
    }

    std::vector<std::size_t> widths() const {
        std::vector<std::size_t> w;
        for (const auto& l : layers) w.push_back(static_cast<std::size_t>(l.weight.rows()));
        return w;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    bool all_finite() const {
        for (const auto& l : layers) {
            if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
        }
        return true;
    }

    /// Same shape and activations, every entry zero.
    MlpParams zeros_like() const {
        MlpParams z = *this;
        for (auto& l : z.layers) {
            l.weight.setZero();
            l.bias.setZero();
        }
        return z;
    }

    /// Visits every scalar parameter in storage order: per layer, weights
    /// row-major, then bias.
    template <class F>
    void for_each(F&& f) { visit(*this, f); }

    template <class F>
    void for_each(F&& f) const { visit(*this, f); }

    bool operator==(const MlpParams&) const = default;

private:
    template <class Self, class F>
    static void visit(Self& self, F& f) {
        for (auto& l : self.layers) {
            for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
                for (Eigen::Index c = 0; c < l.weight.cols(); ++c) f(l.weight(r, c));
            }
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) f(l.bias[r]);
        }
    }
};

/// Checks layer chaining and the output contract (last width 1, sigmoid).
inline void validate(const MlpParams& p) {
    if (p.layers.empty()) throw DataError("network has no layers");
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        const auto& l = p.layers[k];
        if (l.bias.size() != l.weight.rows()) {
            throw DataError("layer " + std::to_string(k) + ": bias size does not match weight rows");
        }
        if (k > 0 && l.weight.cols() != p.layers[k - 1].weight.rows()) {
            throw DataError("layer " + std::to_string(k) + ": input width does not chain");
        }
    }
    if (p.layers.back().weight.rows() != 1 || p.layers.back().activation != Activation::Sigmoid) {
        throw DataError("output layer must be a single sigmoid unit");
    }
    if (!p.all_finite()) throw DataError("network parameters are not finite");
}

/// Hidden widths of the reference scorer; the output unit is appended.
inline const std::vector<std::size_t>& default_widths() {
    static const std::vector<std::size_t> w{512, 256, 128, 64, 1};
    return w;
}

/// Activation layout: SeLU on the first three hidden layers, identity on any
/// later hidden layer (SeLU when `selu_all_hidden`), sigmoid on the output.
inline std::vector<Activation> activation_layout(std::size_t layer_count, bool selu_all_hidden = false) {
    std::vector<Activation> acts(layer_count, Activation::Identity);
    for (std::size_t k = 0; k + 1 < layer_count; ++k) {
        acts[k] = (k < 3 || selu_all_hidden) ? Activation::Selu : Activation::Identity;
    }
    if (layer_count > 0) acts.back() = Activation::Sigmoid;
    return acts;
}

/// Gaussian weights with std 1/sqrt(fan_in), zero biases.
inline MlpParams init_params(std::uint64_t seed, std::size_t input_dim,
                             const std::vector<std::size_t>& widths, bool selu_all_hidden = false) {
    if (input_dim == 0) throw std::invalid_argument("init_params: input dimension must be positive");
    if (widths.empty() || widths.back() != 1) {
        throw std::invalid_argument("init_params: widths must end with a single output unit");
    }
    for (auto w : widths) {
        if (w == 0) throw std::invalid_argument("init_params: zero layer width");
    }
    const auto acts = activation_layout(widths.size(), selu_all_hidden);
    std::mt19937_64 rng(seed);
    MlpParams p;
    std::size_t fan_in = input_dim;
    for (std::size_t k = 0; k < widths.size(); ++k) {
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
        Layer l;
        l.weight.resize(static_cast<Eigen::Index>(widths[k]), static_cast<Eigen::Index>(fan_in));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = normal(rng);
        }
        l.bias = Vector::Zero(static_cast<Eigen::Index>(widths[k]));
        l.activation = acts[k];
        p.layers.push_back(std::move(l));
        fan_in = widths[k];
    }
    return p;
}

/// Everything backward needs from a forward pass over a batch of columns.
struct ForwardTrace {
    Matrix input;                    // D x B
    std::vector<Matrix> pre;         // per layer, width x B
    std::vector<Matrix> post;        // per layer, width x B
    const Matrix& output() const { return post.back(); }  // 1 x B, scores in (0, 1)
    double score(Eigen::Index column = 0) const { return post.back()(0, column); }
};

namespace detail {

inline Matrix activate(const Matrix& z, Activation a) {
    switch (a) {
        case Activation::Selu: return z.unaryExpr([](double x) { return selu(x); });
        case Activation::Identity: return z;
        case Activation::Sigmoid: return z.unaryExpr([](double x) { return sigmoid(x); });
    }
    return z;
}

inline Matrix activation_slope(const Matrix& z, const Matrix& out, Activation a) {
    switch (a) {
        case Activation::Selu: return z.unaryExpr([](double x) { return selu_derivative(x); });
        case Activation::Identity: return Matrix::Ones(z.rows(), z.cols());
        case Activation::Sigmoid: return out.array() * (1.0 - out.array());
    }
    return Matrix::Ones(z.rows(), z.cols());
}

}  // namespace detail

/// Scores every column of `batch` (D x B).
inline ForwardTrace forward(const MlpParams& p, const Matrix& batch) {
    if (p.layers.empty()) throw std::invalid_argument("forward: empty network");
    if (static_cast<std::size_t>(batch.rows()) != p.input_dim()) {
        throw std::invalid_argument("forward: input dimension " + std::to_string(batch.rows()) +
                                    " does not match network input " + std::to_string(p.input_dim()));
    }
    ForwardTrace t;
    t.input = batch;
    t.pre.reserve(p.layers.size());
    t.post.reserve(p.layers.size());
    const Matrix* a = &t.input;
    for (const auto& l : p.layers) {
        Matrix z = l.weight * (*a);
        z.colwise() += l.bias;
        t.post.push_back(detail::activate(z, l.activation));
        t.pre.push_back(std::move(z));
        a = &t.post.back();
    }
    return t;
}

inline ForwardTrace forward(const MlpParams& p, const Vector& f) { return forward(p, Matrix(f)); }

/// Column-vector expressions (e.g. Vector::Constant) bind here.
template <typename Derived>
    requires(Derived::ColsAtCompileTime == 1)
ForwardTrace forward(const MlpParams& p, const Eigen::MatrixBase<Derived>& f) {
    return forward(p, Vector(f));
}

struct Gradient {
    MlpParams params;  // dL/dparams, same shape as the network
    Matrix input;      // dL/dinput, D x B
};

/// Backpropagates upstream dL/dr (one entry per batch column).
/// Parameter gradients are summed over the batch.
inline Gradient backward(const MlpParams& p, const ForwardTrace& t, const Eigen::RowVectorXd& upstream) {
    if (t.pre.size() != p.layers.size() || t.post.size() != p.layers.size()) {
        throw std::invalid_argument("backward: trace does not match network depth");
    }
    if (upstream.size() != t.input.cols()) {
        throw std::invalid_argument("backward: upstream has " + std::to_string(upstream.size()) +
                                    " entries for a batch of " + std::to_string(t.input.cols()));
    }
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        if (t.pre[k].rows() != p.layers[k].weight.rows()) {
            throw std::invalid_argument("backward: trace shape mismatch at layer " + std::to_string(k));
        }
    }
    Gradient g;
    g.params = p.zeros_like();
    Matrix d_out = upstream;
    for (std::size_t k = p.layers.size(); k-- > 0;) {
        const auto& l = p.layers[k];
        const Matrix d_pre =
            d_out.cwiseProduct(detail::activation_slope(t.pre[k], t.post[k], l.activation));
        const Matrix& a_in = k == 0 ? t.input : t.post[k - 1];
        g.params.layers[k].weight.noalias() = d_pre * a_in.transpose();
        g.params.layers[k].bias = d_pre.rowwise().sum();
        d_out = l.weight.transpose() * d_pre;
    }
    g.input = std::move(d_out);
    return g;
}

}  // namespace iconic

#endif  // ICONIC_MLP_HPP
