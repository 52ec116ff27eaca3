#include "drsl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "drsl/alignment.hpp"
#include "drsl/mmdl.hpp"
#include "drsl/segnet.hpp"

namespace drsl::gradcheck {

void Result::merge(const Result& o) {
  checked += o.checked;
  if (o.max_rel_error > max_rel_error || worst.empty()) {
    max_rel_error = o.max_rel_error;
    worst = o.worst;
    worst_analytic = o.worst_analytic;
    worst_numeric = o.worst_numeric;
  }
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

Result check(const std::function<double()>& loss, std::span<Block> blocks, double step) {
  Result r;
  for (auto& b : blocks) {
    if (b.analytic.size() != b.values.size()) throw ShapeError("gradcheck: analytic size mismatch for " + b.name);
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      const double orig = b.values[i];
      b.values[i] = orig + step;
      const double plus = loss();
      b.values[i] = orig - step;
      const double minus = loss();
      b.values[i] = orig;
      const double numeric = (plus - minus) / (2.0 * step);
      const double err = relative_error(b.analytic[i], numeric);
      ++r.checked;
      if (err > r.max_rel_error || r.worst.empty()) {
        r.max_rel_error = err;
        r.worst = b.name + "[" + std::to_string(i) + "]";
        r.worst_analytic = b.analytic[i];
        r.worst_numeric = numeric;
      }
    }
  }
  return r;
}

std::optional<LossId> parse_loss_id(const std::string& s) {
  for (LossId id : all_losses())
    if (s == to_string(id)) return id;
  return std::nullopt;
}

const char* to_string(LossId id) {
  switch (id) {
    case LossId::kSegSource: return "seg_src";
    case LossId::kSegTarget: return "seg_tgt";
    case LossId::kEmb: return "emb";
    case LossId::kCls: return "cls";
    case LossId::kMcl: return "mcl";
    case LossId::kMa: return "ma";
  }
  return "?";
}

std::vector<LossId> all_losses() {
  return {LossId::kSegSource, LossId::kSegTarget, LossId::kEmb, LossId::kCls, LossId::kMcl, LossId::kMa};
}

namespace {

constexpr int kSize = 8;

ModelConfig micro_config(std::uint64_t seed) {
  ModelConfig m;
  m.num_classes = 3;
  m.encoder_width = 4;
  m.embed_dim = 3;
  m.modes = 2;
  m.sigma2 = 0.5;
  m.label_ratio = 2;
  m.init_seed = seed;
  return m;
}

struct MicroData {
  ImageTensor source_image, target_image;
  LabelMap source_labels, pseudo_labels;
};

MicroData micro_data(std::uint64_t seed, int k) {
  Rng rng = Rng(seed).split(0xDA7A);
  MicroData d{ImageTensor(3, kSize, kSize), ImageTensor(3, kSize, kSize), LabelMap(kSize, kSize),
              LabelMap(kSize, kSize)};
  for (double& v : d.source_image.data) v = rng.uniform();
  for (double& v : d.target_image.data) v = rng.uniform();
  for (auto& v : d.source_labels.labels) v = static_cast<std::uint8_t>(rng.index(k));
  for (auto& v : d.pseudo_labels.labels) v = rng.bernoulli(0.3) ? kIgnore : static_cast<std::uint8_t>(rng.index(k));
  return d;
}

// Blocks for every network parameter, with analytic gradients read from the store.
std::vector<Block> param_blocks(SegNet& net) {
  std::vector<Block> blocks;
  for (auto& p : net.params()) blocks.push_back({p.name, std::span<double>(p.value), {p.grad.begin(), p.grad.end()}});
  return blocks;
}

std::vector<double> flat(const Eigen::MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return v;
}

mmdl::ModeBank bank_of(const SegNet& net) {
  const auto& c = net.config();
  return mmdl::ModeBank(c.num_classes, c.modes, c.sigma2, net.mode_centers());
}

// Re-reads sample embeddings from a field at their recorded positions.
void refresh(mmdl::SampleSet& s, const EmbeddingField& field) {
  for (auto& x : s.samples)
    for (int d = 0; d < field.channels; ++d) x.embedding[d] = field(d, x.row, x.col);
}

Result check_seg(bool target, std::uint64_t seed) {
  SegNet net(micro_config(seed));
  const MicroData d = micro_data(seed, net.config().num_classes);
  const ImageTensor& img = target ? d.target_image : d.source_image;
  const LabelMap& labels = target ? d.pseudo_labels : d.source_labels;
  const auto mask = mask_from_labels(labels);
  auto eval = [&](const ProbTensor& p) {
    return target ? loss_seg_target(p, labels, mask) : loss_seg_source(p, labels);
  };

  net.params().zero_grad();
  const ForwardPass pass = net.forward(img, false);
  const SegLoss base = eval(pass.probs);
  net.backward(pass, &base.grad_logits, nullptr);
  auto blocks = param_blocks(net);
  Result r = check([&] { return eval(net.forward(img, false).probs).value; }, blocks);

  // Direct input: the full-resolution logits.
  Tensor logits = pass.logits;
  const auto& g = base.grad_logits.data;
  std::vector<Block> in{{"logits", std::span<double>(logits.data), {g.begin(), g.end()}}};
  r.merge(check([&] { return eval(nn::softmax_channels(logits)).value; }, in));
  return r;
}

// Per-sample loss over sample sets drawn from the network's embeddings.
struct SampleLoss {
  double value;
  Eigen::MatrixXd d_source, d_target, d_centers;
};

Result check_sampled(LossId id, std::uint64_t seed) {
  SegNet net(micro_config(seed));
  const auto& mc = net.config();
  const MicroData d = micro_data(seed, mc.num_classes);
  const LabelMap src_half = mmdl::downscale_labels(d.source_labels, mc.label_ratio);
  const LabelMap tgt_half = mmdl::downscale_labels(d.pseudo_labels, mc.label_ratio);
  constexpr double kAlpha = 1.0;

  auto src_pass = net.forward(d.source_image, true);
  auto tgt_pass = net.forward(d.target_image, true);
  Rng srng = Rng(seed).split(0x5A);
  mmdl::SampleSet src = mmdl::sample_embeddings(src_pass.embeddings, src_half, 4, srng, 0, Domain::kSource);
  mmdl::SampleSet tgt = mmdl::sample_embeddings(tgt_pass.embeddings, tgt_half, 4, srng, 0, Domain::kTarget);
  Rng trng = Rng(seed).split(0x7B);
  const alignment::TripletBatch fixed = alignment::build_mcl_triplets(tgt, src, bank_of(net), 16, trng);

  // The loss as a function of (sample sets, bank); triplet membership is frozen.
  auto compute = [&](const mmdl::SampleSet& s, const mmdl::SampleSet& t, const mmdl::ModeBank& bank) {
    SampleLoss out{0.0, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.size()), bank.dim()),
                   Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.size()), bank.dim()),
                   Eigen::MatrixXd::Zero(bank.centers.rows(), bank.centers.cols())};
    switch (id) {
      case LossId::kEmb: {
        auto g = mmdl::loss_emb(s, bank, kAlpha);
        out.value = g.value;
        out.d_source = g.d_embeddings;
        out.d_centers = g.d_centers;
        break;
      }
      case LossId::kCls: {
        auto g = mmdl::loss_cls(s, bank);
        out.value = g.value;
        out.d_source = g.d_embeddings;
        out.d_centers = g.d_centers;
        break;
      }
      case LossId::kMa: {
        auto g = alignment::loss_ma(s, t, bank, kAlpha);
        out.value = g.value;
        out.d_source = g.d_source;
        out.d_target = g.d_target;
        out.d_centers = g.d_centers;
        break;
      }
      case LossId::kMcl: {
        alignment::TripletBatch b = fixed;
        for (auto& tr : b.triplets) {
          tr.anchor = t.samples[tr.anchor_index].embedding;
          tr.positive = s.samples[tr.positive_index].embedding;
          tr.negative = s.samples[tr.negative_index].embedding;
        }
        auto g = alignment::loss_mcl(b, t.size(), s.size(), bank.dim());
        out.value = g.value;
        out.d_source = g.d_source;
        out.d_target = g.d_target;
        break;
      }
      default:
        break;
    }
    return out;
  };

  // Network parameters.
  net.params().zero_grad();
  {
    const SampleLoss base = compute(src, tgt, bank_of(net));
    Tensor ds(src_pass.embeddings.channels, src_pass.embeddings.height, src_pass.embeddings.width);
    Tensor dt(tgt_pass.embeddings.channels, tgt_pass.embeddings.height, tgt_pass.embeddings.width);
    mmdl::scatter_sample_grads(src, base.d_source, 1.0, 0, ds);
    mmdl::scatter_sample_grads(tgt, base.d_target, 1.0, 0, dt);
    net.backward(src_pass, nullptr, &ds);
    net.backward(tgt_pass, nullptr, &dt);
    net.add_mode_center_grad(base.d_centers);
  }
  auto blocks = param_blocks(net);
  Result r = check(
      [&] {
        mmdl::SampleSet s = src, t = tgt;
        refresh(s, net.forward(d.source_image, true).embeddings);
        refresh(t, net.forward(d.target_image, true).embeddings);
        return compute(s, t, bank_of(net)).value;
      },
      blocks);

  // Direct inputs: sample embeddings and mode centers.
  mmdl::ModeBank bank = bank_of(net);
  const SampleLoss base = compute(src, tgt, bank);
  std::vector<Block> in;
  for (std::size_t i = 0; i < src.size(); ++i)
    in.push_back({"source_sample" + std::to_string(i),
                  std::span<double>(src.samples[i].embedding.data(), src.samples[i].embedding.size()),
                  flat(base.d_source.row(static_cast<Eigen::Index>(i)))});
  for (std::size_t i = 0; i < tgt.size(); ++i)
    in.push_back({"target_sample" + std::to_string(i),
                  std::span<double>(tgt.samples[i].embedding.data(), tgt.samples[i].embedding.size()),
                  flat(base.d_target.row(static_cast<Eigen::Index>(i)))});
  // Eigen matrices are column-major; perturb a row-major copy instead.
  std::vector<double> centers = flat(bank.centers);
  in.push_back({"mode_centers", std::span<double>(centers), flat(base.d_centers)});
  r.merge(check(
      [&] {
        for (Eigen::Index row = 0; row < bank.centers.rows(); ++row)
          for (Eigen::Index col = 0; col < bank.centers.cols(); ++col)
            bank.centers(row, col) = centers[static_cast<std::size_t>(row * bank.centers.cols() + col)];
        return compute(src, tgt, bank).value;
      },
      in));
  return r;
}

}  // namespace

Result run(LossId id, std::uint64_t seed) {
  switch (id) {
    case LossId::kSegSource: return check_seg(false, seed);
    case LossId::kSegTarget: return check_seg(true, seed);
    default: return check_sampled(id, seed);
  }
}

}  // namespace drsl::gradcheck
