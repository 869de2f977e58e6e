#include "sbf/dnn.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include "sbf/errors.hpp"

namespace sbf {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::normalization: return "normalization";
    case LayerKind::fully_connected: return "fully_connected";
    case LayerKind::relu: return "relu";
    case LayerKind::tanh: return "tanh";
    case LayerKind::scale: return "scale";
  }
  return "?";
}

namespace {

LayerKind parse_kind(const std::string& name) {
  for (auto k : {LayerKind::normalization, LayerKind::fully_connected, LayerKind::relu, LayerKind::tanh,
                 LayerKind::scale})
    if (name == layer_kind_name(k)) return k;
  throw IoError("network: unknown layer kind '" + name + "'");
}

// Hex floats round-trip exactly through text.
std::string hex(double v) {
  std::ostringstream s;
  s << std::hexfloat << v;
  return s.str();
}

double parse_hex(const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') throw IoError("network: bad number '" + text + "'");
  return v;
}

void write_f32(std::ostream& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

float read_f32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("network: parameter blob truncated");
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

template <class Scalar>
BasicNetwork<Scalar>::BasicNetwork(int input_dim, std::vector<LayerSpec> specs, Rng* init)
    : input_dim_(input_dim), specs_(std::move(specs)) {
  if (input_dim_ < 1) throw ConfigError("network: input dimension must be positive");
  int width = input_dim_;
  for (const auto& s : specs_) {
    if (s.kind == LayerKind::fully_connected) {
      if (s.width < 1) throw ConfigError("network: fully connected width must be positive");
      Dense d{Matrix::Zero(s.width, width), Vector::Zero(s.width)};
      if (init) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(width));
        for (Eigen::Index c = 0; c < d.weight.cols(); ++c)
          for (Eigen::Index r = 0; r < d.weight.rows(); ++r)
            d.weight(r, c) = static_cast<Scalar>(init->uniform(-bound, bound));
      }
      params_.push_back(std::move(d));
      width = s.width;
    } else if (s.kind == LayerKind::normalization || s.kind == LayerKind::scale) {
      if (!(s.hi > s.lo)) throw ConfigError("network: range bounds must satisfy lo < hi");
    }
  }
  output_dim_ = width;
  rebuild_index();
  reset_optimizer();
}

template <class Scalar>
void BasicNetwork<Scalar>::rebuild_index() {
  param_of_layer_.assign(specs_.size(), -1);
  int p = 0;
  int width = input_dim_;
  for (size_t l = 0; l < specs_.size(); ++l) {
    if (specs_[l].kind == LayerKind::fully_connected) {
      param_of_layer_[l] = p++;
      width = specs_[l].width;
    }
  }
  output_dim_ = width;
  cache_.assign(specs_.size() + 1, Matrix());
  cached_ = false;
}

template <class Scalar>
long BasicNetwork<Scalar>::parameter_count() const {
  long n = 0;
  for (const auto& d : params_) n += static_cast<long>(d.weight.size() + d.bias.size());
  return n;
}

template <class Scalar>
void BasicNetwork<Scalar>::reset_optimizer() {
  adam_m_.clear();
  adam_v_.clear();
  for (const auto& d : params_) {
    adam_m_.push_back({Matrix::Zero(d.weight.rows(), d.weight.cols()), Vector::Zero(d.bias.size())});
    adam_v_.push_back({Matrix::Zero(d.weight.rows(), d.weight.cols()), Vector::Zero(d.bias.size())});
  }
  adam_t_ = 0;
}

namespace {

template <class Net, class Matrix>
void apply_layer(const LayerSpec& s, const typename Net::Dense* d, const Matrix& in, Matrix& out) {
  using Scalar = typename Matrix::Scalar;
  switch (s.kind) {
    case LayerKind::fully_connected:
      out.noalias() = d->weight * in;
      out.colwise() += d->bias;
      break;
    case LayerKind::relu:
      out = in.cwiseMax(Scalar(0));
      break;
    case LayerKind::tanh:
      out = in.array().tanh().matrix();
      break;
    case LayerKind::normalization: {
      const auto a = static_cast<Scalar>(2.0 / (s.hi - s.lo));
      const auto b = static_cast<Scalar>(-(s.hi + s.lo) / (s.hi - s.lo));
      out = ((in.array() * a) + b).matrix();
      break;
    }
    case LayerKind::scale: {
      const auto a = static_cast<Scalar>(0.5 * (s.hi - s.lo));
      const auto b = static_cast<Scalar>(0.5 * (s.hi + s.lo));
      out = ((in.array() * a) + b).matrix();
      break;
    }
  }
}

}  // namespace

template <class Scalar>
const typename BasicNetwork<Scalar>::Matrix& BasicNetwork<Scalar>::forward(const Matrix& x) {
  if (x.rows() != input_dim_) throw DomainError("network: input dimension mismatch");
  cache_[0] = x;
  for (size_t l = 0; l < specs_.size(); ++l) {
    const int p = param_of_layer_[l];
    apply_layer<BasicNetwork>(specs_[l], p >= 0 ? &params_[p] : nullptr, cache_[l], cache_[l + 1]);
  }
  cached_ = true;
  return cache_.back();
}

template <class Scalar>
typename BasicNetwork<Scalar>::Matrix BasicNetwork<Scalar>::predict(const Matrix& x) const {
  if (x.rows() != input_dim_) throw DomainError("network: input dimension mismatch");
  Matrix cur = x;
  Matrix next;
  for (size_t l = 0; l < specs_.size(); ++l) {
    const int p = param_of_layer_[l];
    apply_layer<BasicNetwork>(specs_[l], p >= 0 ? &params_[p] : nullptr, cur, next);
    cur.swap(next);
  }
  return cur;
}

template <class Scalar>
std::vector<Scalar> BasicNetwork<Scalar>::forward(std::span<const Scalar> input) {
  Matrix x(input_dim_, 1);
  if (static_cast<int>(input.size()) != input_dim_) throw DomainError("network: input dimension mismatch");
  for (int i = 0; i < input_dim_; ++i) x(i, 0) = input[i];
  const Matrix y = predict(x);
  return std::vector<Scalar>(y.data(), y.data() + y.size());
}

template <class Scalar>
typename BasicNetwork<Scalar>::Gradients BasicNetwork<Scalar>::backward(const Matrix& output_grad,
                                                                        bool parameter_grads) {
  if (!cached_) throw TrainingError("network: backward without a cached forward pass");
  if (output_grad.rows() != output_dim_ || output_grad.cols() != cache_.back().cols())
    throw DomainError("network: output gradient shape mismatch");
  Gradients g;
  if (parameter_grads) g.layers.resize(params_.size());
  Matrix grad = output_grad;
  Matrix prev;
  for (size_t l = specs_.size(); l-- > 0;) {
    const LayerSpec& s = specs_[l];
    const Matrix& in = cache_[l];
    const Matrix& out = cache_[l + 1];
    switch (s.kind) {
      case LayerKind::fully_connected: {
        const int p = param_of_layer_[l];
        if (parameter_grads) {
          g.layers[p].weight.noalias() = grad * in.transpose();
          g.layers[p].bias = grad.rowwise().sum();
        }
        prev.noalias() = params_[p].weight.transpose() * grad;
        grad.swap(prev);
        break;
      }
      case LayerKind::relu:
        grad = (in.array() > Scalar(0)).select(grad, Scalar(0));
        break;
      case LayerKind::tanh:
        grad = (grad.array() * (Scalar(1) - out.array().square())).matrix();
        break;
      case LayerKind::normalization:
        grad *= static_cast<Scalar>(2.0 / (s.hi - s.lo));
        break;
      case LayerKind::scale:
        grad *= static_cast<Scalar>(0.5 * (s.hi - s.lo));
        break;
    }
  }
  g.input = std::move(grad);
  return g;
}

template <class Scalar>
void BasicNetwork<Scalar>::adam_step(const Gradients& grads, const LearningRateProfile& rates,
                                     const AdamHyper& hyper) {
  if (grads.layers.size() != params_.size()) throw TrainingError("network: gradient layer count mismatch");
  if (rates.size() != params_.size()) throw ConfigError("network: learning-rate profile length mismatch");
  for (size_t p = 0; p < params_.size(); ++p) {
    if (rates[p] == 0.0) continue;
    if (!grads.layers[p].weight.allFinite() || !grads.layers[p].bias.allFinite())
      throw TrainingError("network: non-finite gradient in layer " + std::to_string(p));
  }
  ++adam_t_;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(adam_t_));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(adam_t_));
  const auto b1 = static_cast<Scalar>(hyper.beta1);
  const auto b2 = static_cast<Scalar>(hyper.beta2);
  const auto eps = static_cast<Scalar>(hyper.epsilon);
  for (size_t p = 0; p < params_.size(); ++p) {
    if (rates[p] == 0.0) continue;
    const auto step = static_cast<Scalar>(rates[p] / c1);
    const auto root_c2 = static_cast<Scalar>(std::sqrt(c2));
    auto update = [&](auto& theta, auto& m, auto& v, const auto& gr) {
      m = b1 * m + (Scalar(1) - b1) * gr;
      v = b2 * v + (Scalar(1) - b2) * gr.cwiseProduct(gr);
      theta.array() -= step * m.array() / (v.array().sqrt() / root_c2 + eps);
    };
    update(params_[p].weight, adam_m_[p].weight, adam_v_[p].weight, grads.layers[p].weight);
    update(params_[p].bias, adam_m_[p].bias, adam_v_[p].bias, grads.layers[p].bias);
  }
}

template <class Scalar>
void BasicNetwork<Scalar>::copy_parameters_from(const BasicNetwork& other) {
  if (!same_architecture(other)) throw DomainError("network: architecture mismatch");
  params_ = other.params_;
}

template <class Scalar>
void BasicNetwork<Scalar>::insert_identity_layer(int position, bool with_relu) {
  if (position < 0 || position > static_cast<int>(specs_.size()))
    throw DomainError("network: insertion position out of range");
  int width = input_dim_;
  for (int l = 0; l < position; ++l)
    if (specs_[l].kind == LayerKind::fully_connected) width = specs_[l].width;
  int before = 0;
  for (int l = 0; l < position; ++l)
    if (specs_[l].kind == LayerKind::fully_connected) ++before;

  specs_.insert(specs_.begin() + position, LayerSpec::dense(width));
  if (with_relu) specs_.insert(specs_.begin() + position + 1, LayerSpec::relu());
  params_.insert(params_.begin() + before, Dense{Matrix::Identity(width, width), Vector::Zero(width)});
  rebuild_index();
  reset_optimizer();
}

template <class Scalar>
void BasicNetwork<Scalar>::serialize(std::ostream& out) const {
  out << kNetworkFormatTag << ' ' << kNetworkFormatVersion << '\n';
  out << "input " << input_dim_ << '\n';
  out << "layers " << specs_.size() << '\n';
  for (const auto& s : specs_) {
    out << layer_kind_name(s.kind);
    if (s.kind == LayerKind::fully_connected) out << ' ' << s.width;
    if (s.kind == LayerKind::normalization || s.kind == LayerKind::scale) out << ' ' << hex(s.lo) << ' ' << hex(s.hi);
    out << '\n';
  }
  out << "parameters " << parameter_count() << '\n';
  for (const auto& d : params_) {
    for (Eigen::Index r = 0; r < d.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < d.weight.cols(); ++c) write_f32(out, static_cast<float>(d.weight(r, c)));
    for (Eigen::Index r = 0; r < d.bias.size(); ++r) write_f32(out, static_cast<float>(d.bias(r)));
  }
  if (!out) throw IoError("network: write failed");
}

template <class Scalar>
BasicNetwork<Scalar> BasicNetwork<Scalar>::deserialize(std::istream& in) {
  auto line = [&]() {
    std::string s;
    if (!std::getline(in, s)) throw IoError("network: manifest truncated");
    return s;
  };
  std::istringstream head(line());
  std::string tag;
  int version = 0;
  head >> tag >> version;
  if (tag != kNetworkFormatTag) throw IoError("network: not a network manifest");
  if (version != kNetworkFormatVersion) throw IoError("network: unsupported format version " + std::to_string(version));

  auto keyed = [&](const char* key) {
    std::istringstream s(line());
    std::string k;
    long v = -1;
    if (!(s >> k >> v) || k != key || v < 0) throw IoError(std::string("network: expected '") + key + "'");
    return v;
  };
  const long input = keyed("input");
  const long count = keyed("layers");
  std::vector<LayerSpec> specs;
  for (long i = 0; i < count; ++i) {
    std::istringstream s(line());
    std::string name;
    s >> name;
    LayerSpec spec;
    spec.kind = parse_kind(name);
    if (spec.kind == LayerKind::fully_connected) {
      if (!(s >> spec.width) || spec.width < 1) throw IoError("network: bad layer width");
      spec.lo = spec.hi = 0.0;
    } else if (spec.kind == LayerKind::normalization || spec.kind == LayerKind::scale) {
      std::string lo, hi;
      if (!(s >> lo >> hi)) throw IoError("network: missing range bounds");
      spec.lo = parse_hex(lo);
      spec.hi = parse_hex(hi);
    } else {
      spec.lo = spec.hi = 0.0;
    }
    specs.push_back(spec);
  }
  const long declared = keyed("parameters");
  BasicNetwork net;
  try {
    net = BasicNetwork(static_cast<int>(input), std::move(specs));
  } catch (const ConfigError& e) {
    throw IoError(std::string("network: invalid architecture: ") + e.what());
  }
  if (declared != net.parameter_count()) throw IoError("network: parameter count does not match the architecture");
  for (auto& d : net.params_) {
    for (Eigen::Index r = 0; r < d.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < d.weight.cols(); ++c) d.weight(r, c) = static_cast<Scalar>(read_f32(in));
    for (Eigen::Index r = 0; r < d.bias.size(); ++r) d.bias(r) = static_cast<Scalar>(read_f32(in));
  }
  return net;
}

template <class Scalar>
template <class Other>
BasicNetwork<Other> BasicNetwork<Scalar>::cast() const {
  BasicNetwork<Other> out(input_dim_, specs_);
  for (size_t p = 0; p < params_.size(); ++p) {
    out.params_[p].weight = params_[p].weight.template cast<Other>();
    out.params_[p].bias = params_[p].bias.template cast<Other>();
  }
  return out;
}

template <class Scalar>
BasicNetwork<Scalar> build_actor(int elements, bool fine_tune, Rng* init) {
  if (elements < 1) throw ConfigError("actor: element count must be positive");
  const double pi = std::numbers::pi;
  std::vector<LayerSpec> s{LayerSpec::normalization(-pi, pi), LayerSpec::dense(16 * elements), LayerSpec::relu(),
                           LayerSpec::dense(16 * elements), LayerSpec::relu()};
  if (fine_tune) {
    s.push_back(LayerSpec::dense(16 * elements));
    s.push_back(LayerSpec::relu());
  }
  s.push_back(LayerSpec::dense(elements));
  s.push_back(LayerSpec::tanh());
  s.push_back(LayerSpec::scale(-pi, pi));
  return BasicNetwork<Scalar>(elements, std::move(s), init);
}

template <class Scalar>
BasicNetwork<Scalar> build_critic(int elements, bool fine_tune, Rng* init) {
  if (elements < 1) throw ConfigError("critic: element count must be positive");
  std::vector<LayerSpec> s{LayerSpec::dense(32 * elements), LayerSpec::relu(), LayerSpec::dense(16 * elements)};
  if (fine_tune) s.push_back(LayerSpec::dense(16 * elements));
  s.push_back(LayerSpec::tanh());
  s.push_back(LayerSpec::dense(1));
  return BasicNetwork<Scalar>(2 * elements, std::move(s), init);
}

template <class Scalar>
void soft_update(BasicNetwork<Scalar>& target, const BasicNetwork<Scalar>& source, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("soft_update: tau must be in [0, 1]");
  if (!target.same_architecture(source)) throw DomainError("soft_update: architecture mismatch");
  const auto t = static_cast<Scalar>(tau);
  const auto keep = static_cast<Scalar>(1.0 - tau);
  for (size_t p = 0; p < target.params().size(); ++p) {
    auto& d = target.params()[p];
    const auto& s = source.params()[p];
    d.weight = t * s.weight + keep * d.weight;
    d.bias = t * s.bias + keep * d.bias;
  }
}

template <class Scalar>
BasicNetwork<Scalar> blend_params(std::span<const BasicNetwork<Scalar>* const> nets, std::span<const double> weights) {
  if (nets.empty() || nets.size() != weights.size()) throw DomainError("blend_params: need one weight per network");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("blend_params: weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("blend_params: weights must sum to 1");
  for (const auto* n : nets)
    if (!n->same_architecture(*nets[0])) throw DomainError("blend_params: architecture mismatch");

  BasicNetwork<Scalar> out = *nets[0];
  for (size_t p = 0; p < out.params().size(); ++p) {
    auto& d = out.params()[p];
    d.weight.setZero();
    d.bias.setZero();
    for (size_t k = 0; k < nets.size(); ++k) {
      const auto w = static_cast<Scalar>(weights[k]);
      d.weight += w * nets[k]->params()[p].weight;
      d.bias += w * nets[k]->params()[p].bias;
    }
  }
  out.reset_optimizer();
  return out;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;
template BasicNetwork<double> BasicNetwork<float>::cast<double>() const;
template BasicNetwork<float> BasicNetwork<double>::cast<float>() const;
template BasicNetwork<float> BasicNetwork<float>::cast<float>() const;
template BasicNetwork<double> BasicNetwork<double>::cast<double>() const;

template BasicNetwork<float> build_actor<float>(int, bool, Rng*);
template BasicNetwork<double> build_actor<double>(int, bool, Rng*);
template BasicNetwork<float> build_critic<float>(int, bool, Rng*);
template BasicNetwork<double> build_critic<double>(int, bool, Rng*);
template void soft_update<float>(BasicNetwork<float>&, const BasicNetwork<float>&, double);
template void soft_update<double>(BasicNetwork<double>&, const BasicNetwork<double>&, double);
template BasicNetwork<float> blend_params<float>(std::span<const BasicNetwork<float>* const>, std::span<const double>);
template BasicNetwork<double> blend_params<double>(std::span<const BasicNetwork<double>* const>,
                                                   std::span<const double>);

}  // namespace sbf
