#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "b2s/model/model.hpp"
#include "b2s/nn/grad_check.hpp"

namespace {

using namespace b2s;
using namespace b2s::model;
using nn::Tensor;

Tensor random_tensor(nn::Shape s, Rng& rng, double scale = 1.0) {
  std::vector<double> v(nn::numel_of(s));
  for (auto& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(s), std::move(v));
}

void randomize(nn::ParamStore& ps, Rng& rng, double scale) {
  for (auto& [name, t] : ps.entries())
    for (auto& x : t.values_mut()) x = (name.ends_with(".g") ? 1.0 : 0.0) + scale * rng.uniform(-1.0, 1.0);
}

// Independent multilinear sampler: cell-center convention, clamped to the
// volume, lower corner capped so that the upper corner stays inside.
std::vector<double> naive_sample(const std::vector<double>& map, std::size_t channels,
                                 const std::vector<std::size_t>& dims, const std::vector<double>& loc,
                                 std::size_t ch0, std::size_t ch) {
  const auto d = dims.size();
  std::vector<std::size_t> lo(d);
  std::vector<double> f(d);
  for (std::size_t a = 0; a < d; ++a) {
    const double s = static_cast<double>(dims[a]);
    const double x = std::clamp(loc[a] * s - 0.5, 0.0, s - 1.0);
    if (dims[a] == 1) {
      lo[a] = 0;
      f[a] = 0.0;
      continue;
    }
    lo[a] = std::min(static_cast<std::size_t>(std::floor(x)), dims[a] - 2);
    f[a] = x - static_cast<double>(lo[a]);
  }
  std::vector<double> out(ch, 0.0);
  for (std::size_t corner = 0; corner < (1u << d); ++corner) {
    double w = 1.0;
    std::size_t cell = 0;
    for (std::size_t a = 0; a < d; ++a) {
      const bool up = (corner >> a) & 1u;
      if (up && dims[a] == 1) {
        w = 0.0;
        break;
      }
      w *= up ? f[a] : 1.0 - f[a];
      cell = cell * dims[a] + lo[a] + (up ? 1 : 0);
    }
    if (w == 0.0) continue;
    for (std::size_t j = 0; j < ch; ++j) out[j] += w * map[cell * channels + ch0 + j];
  }
  return out;
}

std::vector<double> naive_linear(const std::vector<double>& x, std::size_t rows, const Linear& l) {
  const auto in = l.w.dim(0), out = l.w.dim(1);
  const auto w = l.w.values(), b = l.b.values();
  std::vector<double> y(rows * out);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += x[r * in + i] * w[i * out + o];
      y[r * out + o] = s;
    }
  return y;
}

// Naive x <- LN(x + out(attention)) for one module, loops only.
std::vector<double> naive_attend(const std::vector<double>& x, const std::vector<double>& src, std::size_t n,
                                 std::size_t c, const DeformAttn& a, const std::vector<std::size_t>& dims,
                                 const std::vector<double>& ref) {
  const auto d = dims.size();
  std::size_t cells = 1;
  for (auto s : dims) cells *= s;
  const auto value = naive_linear(src, cells, a.value);
  const auto off = naive_linear(x, n, a.offset);
  const auto logits = naive_linear(x, n, a.weight);
  const auto ch = c / a.heads;
  std::vector<double> agg(n * c, 0.0);
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t h = 0; h < a.heads; ++h) {
      const double* lg = logits.data() + q * a.heads * a.points + h * a.points;
      const double mx = *std::max_element(lg, lg + a.points);
      double z = 0.0;
      for (std::size_t p = 0; p < a.points; ++p) z += std::exp(lg[p] - mx);
      for (std::size_t p = 0; p < a.points; ++p) {
        const double aw = std::exp(lg[p] - mx) / z;
        std::vector<double> loc(d);
        for (std::size_t k = 0; k < d; ++k)
          loc[k] = ref[q * d + k] + off[((q * a.heads + h) * a.points + p) * d + k] / static_cast<double>(dims[k]);
        const auto s = naive_sample(value, c, dims, loc, h * ch, ch);
        for (std::size_t j = 0; j < ch; ++j) agg[q * c + h * ch + j] += aw * s[j];
      }
    }
  const auto o = naive_linear(agg, n, a.out);
  std::vector<double> y(n * c);
  const auto g = a.norm.g.values(), bb = a.norm.b.values();
  for (std::size_t q = 0; q < n; ++q) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += x[q * c + j] + o[q * c + j];
    mean /= c;
    for (std::size_t j = 0; j < c; ++j) var += std::pow(x[q * c + j] + o[q * c + j] - mean, 2);
    var /= c;
    for (std::size_t j = 0; j < c; ++j)
      y[q * c + j] = (x[q * c + j] + o[q * c + j] - mean) / std::sqrt(var + 1e-5) * g[j] + bb[j];
  }
  return y;
}

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  EXPECT_EQ(a.size(), b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

class DeformAttnOracle : public ::testing::TestWithParam<std::size_t> {};

TEST_P(DeformAttnOracle, MatchesNaiveLoops) {
  const std::size_t d = GetParam();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const std::size_t c = 8, heads = 2, points = 3, n = 7;
    const std::vector<std::size_t> dims = d == 2 ? std::vector<std::size_t>{5, 4} : std::vector<std::size_t>{4, 3, 2};
    std::size_t cells = 1;
    for (auto s : dims) cells *= s;
    nn::ParamStore ps;
    const auto a = DeformAttn::make(ps, "attn", c, heads, points, d, rng);
    randomize(ps, rng, 0.8);
    const auto x = random_tensor({n, c}, rng);
    const auto src = random_tensor({cells, c}, rng);
    std::vector<double> ref(n * d);
    for (auto& r : ref) r = rng.uniform(-0.1, 1.1);
    const auto y = attend_block(x, x, src, a, dims, ref);
    const auto expect = naive_attend(to_vec(x), to_vec(src), n, c, a, dims, ref);
    EXPECT_LE(max_abs_diff(y.values(), expect), 1e-10) << "seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(Dims, DeformAttnOracle, ::testing::Values(2, 3));

TEST(DeformAttn, ZeroOffsetsIdentityProjectionsReadReferenceCell) {
  Rng rng(3);
  const std::size_t c = 4;
  nn::ParamStore ps;
  auto a = DeformAttn::make(ps, "attn", c, 1, 1, 3, rng);
  for (auto* l : {&a.value, &a.out}) {
    auto w = l->w.values_mut();
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < c; ++i) w[i * c + i] = 1.0;
  }
  const std::vector<std::size_t> dims{3, 4, 2};
  const auto src = random_tensor({24, c}, rng);
  const auto q = random_tensor({24, c}, rng);
  const auto [off, w] = a.plan(q);
  const auto s = nn::deform_sample(a.value(src), dims, off, w, volume_refs({3, 4, 2}), 1, 1);
  EXPECT_LE(max_abs_diff(s.values(), src.values()), 1e-12);
}

// ------------------------------------------------------------- model setup

struct Micro {
  InputSpec in;
  ModelConfig cfg;
  CameraRig rig;
  std::vector<float> views;
  SemanticGrid labels;
  BinaryGrid binary;
};

Micro micro_setup(std::uint64_t seed, Strategy strategy = Strategy::intermediate,
                  Transform transform = Transform::lift_splat) {
  Micro m{{}, {}, {}, {}, SemanticGrid(GridSpec{4, 4, 2, 0.5f, {-1.0f, -1.0f, 0.0f}}, 2),
          BinaryGrid(GridSpec{4, 4, 2, 0.5f, {-1.0f, -1.0f, 0.0f}})};
  m.in.grid = m.labels.spec();
  m.in.num_classes = 2;
  m.in.cameras = 2;
  m.in.image_w = 8;
  m.in.image_h = 8;
  m.in.view_channels = 4;
  m.cfg.transform = transform;
  m.cfg.strategy = strategy;
  m.cfg.compact_h = m.cfg.compact_w = 1;
  m.cfg.compact_z = 2;
  m.cfg.encoder_c1 = 3;
  m.cfg.channels = 4;
  m.cfg.mid_channels = 4;
  m.cfg.full_channels = 3;
  m.cfg.mlp_hidden = 5;
  m.cfg.dense_layers = 1;
  m.cfg.sparse_layers = 1;
  m.cfg.heads = 2;
  m.cfg.self_points = 2;
  m.cfg.cross_points = 2;
  m.cfg.depth_bins = 3;
  m.cfg.depth_min = 0.2;
  m.cfg.depth_max = 2.0;
  m.rig = make_ring_rig({2, 8, 8, 4.0, 0.5});
  Rng rng(seed);
  m.views.resize(2 * 4 * 64);
  for (auto& v : m.views) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (std::size_t i = 0; i < m.in.grid.count(); ++i) {
    const auto l = static_cast<std::uint8_t>(rng.integer(0, 2));
    m.labels.set(i, l);
    if (l) m.binary.set(i);
  }
  return m;
}

Tensor total_loss(const Model& model, const ForwardResult& r, const SemanticGrid& labels, const BinaryGrid& mid_gt) {
  auto loss = nn::focal_loss(r.semantic_logits, labels.labels(), model.config().focal_gamma);
  if (r.binary_logits.defined()) {
    std::vector<double> t(mid_gt.spec().count());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = mid_gt.get(i) ? 1.0 : 0.0;
    loss = nn::add(loss, nn::bce_with_logits(r.binary_logits, t));
  }
  return loss;
}

TEST(ModelGrad, EndToEndMicroSceneMatchesFiniteDifferences) {
  for (auto transform : {Transform::lift_splat, Transform::deformable}) {
    for (auto mode : {Mode::onboard, Mode::offboard}) {
      auto m = micro_setup(11);
      m.cfg.transform = transform;
      Model model(m.cfg, m.in, 5);
      Rng rng(17);
      randomize(model.params(), rng, 0.5);
      const auto mid_gt = downsample_any(m.binary, model.mid_spec());
      std::vector<Tensor> inputs;
      for (auto& [name, t] : model.params().entries()) inputs.push_back(t);
      const auto gathered = model.forward(m.views, m.rig, mode, &m.binary).gathered;
      auto f = [&] {
        const auto r = model.forward(m.views, m.rig, mode, &m.binary);
        EXPECT_EQ(r.gathered, gathered) << "mask changed under perturbation";
        return total_loss(model, r, m.labels, mid_gt);
      };
      nn::GradCheckOptions opt;
      opt.max_coords_per_input = 6;
      const auto res = nn::grad_check(f, inputs, opt);
      EXPECT_LT(res.max_rel_error, 1e-3) << "worst " << model.params().entries()[res.input].first << "[" << res.index
                                          << "] analytic " << res.analytic << " numeric " << res.numeric;
      EXPECT_GT(res.checked, 100u);
    }
  }
}

TEST(ModelGrad, BaselineStrategiesMatchFiniteDifferences) {
  for (auto strategy : {Strategy::multi_head, Strategy::replacing}) {
    auto m = micro_setup(12, strategy);
    Model model(m.cfg, m.in, 6);
    Rng rng(18);
    randomize(model.params(), rng, 0.5);
    const auto mid_gt = downsample_any(m.binary, model.mid_spec());
    std::vector<Tensor> inputs;
    for (auto& [name, t] : model.params().entries()) inputs.push_back(t);
    auto f = [&] { return total_loss(model, model.forward(m.views, m.rig, Mode::onboard), m.labels, mid_gt); };
    nn::GradCheckOptions opt;
    opt.max_coords_per_input = 6;
    EXPECT_LT(nn::grad_check(f, inputs, opt).max_rel_error, 1e-3);
  }
}

// ------------------------------------------------------- sparse vs dense

TEST(SparseStage, AllOccupiedMaskMatchesDenseReference) {
  int configs = 0;
  for (std::uint64_t seed = 1; configs < 20; ++seed) {
    Rng pick(seed);
    auto m = micro_setup(seed);
    m.cfg.heads = pick.integer(0, 1) ? 2 : 1;
    m.cfg.self_points = static_cast<std::uint32_t>(pick.integer(1, 3));
    m.cfg.cross_points = static_cast<std::uint32_t>(pick.integer(1, 3));
    m.cfg.sparse_layers = static_cast<std::uint32_t>(pick.integer(1, 3));
    m.cfg.sparse_cross_attention = pick.integer(0, 1) == 1;
    Model model(m.cfg, m.in, seed);
    Rng rng(seed + 100);
    randomize(model.params(), rng, 0.7);
    const auto image = model.encode(m.views);
    const auto& geo = model.geometry(m.rig);
    const auto n = model.mid_spec().count();
    const auto mid = random_tensor({n, m.cfg.mid_channels}, rng);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const auto sparse = model.sparse_forward(mid, all, image, geo);
    const auto dense = model.sparse_dense_reference(mid, mid, image, geo);
    EXPECT_LE(max_abs_diff(sparse.values(), dense.values()), 1e-8) << "seed " << seed;
    ++configs;
  }
}

TEST(SparseStage, SingleLayerPartialMaskMatchesDenseOnScatteredVolume) {
  auto m = micro_setup(4);
  m.cfg.sparse_layers = 1;
  Model model(m.cfg, m.in, 4);
  Rng rng(40);
  randomize(model.params(), rng, 0.7);
  const auto image = model.encode(m.views);
  const auto& geo = model.geometry(m.rig);
  const auto n = model.mid_spec().count();
  const auto mid = random_tensor({n, m.cfg.mid_channels}, rng);
  const std::vector<std::size_t> idx{0, 2, 3, 6};
  const auto sparse = model.sparse_forward(mid, idx, image, geo);
  const auto dense = model.sparse_dense_reference(mid, nn::scatter_rows(nn::gather_rows(mid, idx), idx, n), image, geo);
  const std::size_t c = m.cfg.mid_channels;
  for (auto i : idx)
    for (std::size_t j = 0; j < c; ++j) EXPECT_NEAR(sparse.values()[i * c + j], dense.values()[i * c + j], 1e-10);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::find(idx.begin(), idx.end(), i) != idx.end()) continue;
    for (std::size_t j = 0; j < c; ++j) EXPECT_EQ(sparse.values()[i * c + j], 0.0);
  }
}

TEST(SparseStage, ZeroAttentionOutputsMakeVoxelsIndependent) {
  auto m = micro_setup(8);
  Model model(m.cfg, m.in, 8);
  Rng rng(80);
  randomize(model.params(), rng, 0.7);
  for (auto& [name, t] : model.params().entries())
    if (name.starts_with("sparse.") && (name.find(".mix.out.") != std::string::npos ||
                                        name.find(".cross.out.") != std::string::npos))
      std::fill(t.values_mut().begin(), t.values_mut().end(), 0.0);
  const auto image = model.encode(m.views);
  const auto& geo = model.geometry(m.rig);
  const auto n = model.mid_spec().count();
  const auto mid = random_tensor({n, m.cfg.mid_channels}, rng);
  const auto a = model.sparse_forward(mid, {1, 5}, image, geo);
  const auto b = model.sparse_forward(mid, {0, 1, 4, 5, 7}, image, geo);
  const std::size_t c = m.cfg.mid_channels;
  for (std::size_t i : {1u, 5u})
    for (std::size_t j = 0; j < c; ++j) EXPECT_EQ(a.values()[i * c + j], b.values()[i * c + j]);
}

// --------------------------------------------------- default-scale wiring

const Scene& default_scene() {
  static const Scene s = generate_scene(77, SceneParams{});
  return s;
}

TEST(ModelShapes, DefaultConfigShapeChain) {
  const auto& s = default_scene();
  const auto in = InputSpec::from(s.params);
  ModelConfig cfg;
  Model model(cfg, in, 1);
  const auto r = model.forward(s.views, s.rig, Mode::onboard);
  EXPECT_EQ(r.compact.shape(), (nn::Shape{512, 32}));
  EXPECT_EQ(r.mid.shape(), (nn::Shape{2048, 32}));
  EXPECT_EQ(r.binary_logits.shape(), (nn::Shape{2048, 1}));
  EXPECT_EQ(r.semantic_logits.shape(), (nn::Shape{8192, 5}));
  EXPECT_FALSE(r.gathered.empty());
  EXPECT_TRUE(std::is_sorted(r.gathered.begin(), r.gathered.end()));
  const auto image = model.encode(s.views);
  EXPECT_EQ(image.shape(), (nn::Shape{4 * 8 * 14, 32}));
}

TEST(ModelShapes, LiftSplatTargetsLandInsideTheVolume) {
  const auto& s = default_scene();
  Model model(ModelConfig{}, InputSpec::from(s.params), 1);
  const auto& geo = model.geometry(s.rig);
  ASSERT_EQ(geo.splat_target.size(), 4u * 8 * 14 * 16);
  const auto inside = std::count_if(geo.splat_target.begin(), geo.splat_target.end(), [](auto t) { return t < 512; });
  EXPECT_GT(inside, 0);
  EXPECT_LT(inside, static_cast<long>(geo.splat_target.size()));
  // the image centre of camera 0 looks along +x at the mount height
  const auto t = geo.splat_target[((4 * 14 + 7) * 16) + 5];
  ASSERT_LT(t, 512u);
  const auto center = volume_centers(s.params.spec, {8, 8, 8})[t];
  EXPECT_GT(center[0], 0.0);
  EXPECT_LT(std::abs(center[1]), 2.0);
}

TEST(ModelContracts, OffboardDecodingForcesFreeOutsideGroundTruth) {
  const auto& s = default_scene();
  Model model(ModelConfig{}, InputSpec::from(s.params), 2);
  const auto r = model.forward(s.views, s.rig, Mode::offboard, &s.binary);
  const auto pred = model.decode(r, Mode::offboard, &s.binary);
  for (std::size_t i = 0; i < s.spec().count(); ++i) {
    if (s.binary.get(i))
      EXPECT_NE(pred.at(i), 0);
    else
      EXPECT_EQ(pred.at(i), 0);
  }
  const auto mid_gt = downsample_any(s.binary, model.mid_spec());
  EXPECT_EQ(r.gathered.size(), mid_gt.count());
}

TEST(ModelContracts, OffboardWithoutGroundTruthIsRejected) {
  const auto& s = default_scene();
  Model model(ModelConfig{}, InputSpec::from(s.params), 2);
  try {
    model.forward(s.views, s.rig, Mode::offboard, nullptr);
    FAIL() << "expected missing_gt_binary";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_gt_binary);
  }
}

TEST(ModelContracts, FreeDominantLogitsDecodeToAllFree) {
  const auto& s = default_scene();
  Model model(ModelConfig{}, InputSpec::from(s.params), 3);
  model.params().get("semantic.head.b").values_mut()[0] = 1e6;
  const auto r = model.forward(s.views, s.rig, Mode::onboard);
  EXPECT_EQ(binary_from_semantic(model.decode(r, Mode::onboard)).count(), 0u);
}

TEST(ModelContracts, EmptyPredictedMaskFallsBackToTopVoxel) {
  const auto& s = default_scene();
  Model model(ModelConfig{}, InputSpec::from(s.params), 3);
  model.params().get("binary.head.b").values_mut()[0] = -1e3;
  const auto r = model.forward(s.views, s.rig, Mode::onboard);
  ASSERT_EQ(r.gathered.size(), 1u);
  const auto v = r.binary_logits.values();
  EXPECT_EQ(r.gathered[0], static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin()));
}

TEST(ModelContracts, PermutingCamerasLeavesOutputsUnchanged) {
  const auto& s = default_scene();
  Model model(ModelConfig{}, InputSpec::from(s.params), 4);
  const auto views = s.views;
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  CameraRig rig;
  std::vector<float> pv;
  const auto per = views.size() / 4;
  for (auto k : perm) {
    rig.push_back(s.rig[k]);
    pv.insert(pv.end(), views.begin() + static_cast<std::ptrdiff_t>(k * per),
              views.begin() + static_cast<std::ptrdiff_t>((k + 1) * per));
  }
  const auto a = model.forward(views, s.rig, Mode::onboard);
  const auto b = model.forward(pv, rig, Mode::onboard);
  EXPECT_LE(max_abs_diff(a.binary_logits.values(), b.binary_logits.values()), 1e-9);
  EXPECT_LE(max_abs_diff(a.semantic_logits.values(), b.semantic_logits.values()), 1e-9);
}

TEST(ModelContracts, ProjectionsInvariantUnderJointTranslation) {
  const auto& s = default_scene();
  const Vec3 shift{3.0, -2.0, 0.7};
  CameraRig moved = s.rig;
  for (auto& c : moved) c.pose.t = c.pose.t + shift;
  GridSpec g = s.params.spec;
  for (int a = 0; a < 3; ++a) g.origin[a] += static_cast<float>(shift[a]);
  const auto a = project_queries(s.rig, volume_centers(s.params.spec, {16, 16, 8}));
  const auto b = project_queries(moved, volume_centers(g, {16, 16, 8}));
  ASSERT_EQ(a.rows, b.rows);
  for (std::size_t c = 0; c < a.ref.size(); ++c) EXPECT_LE(max_abs_diff(a.ref[c], b.ref[c]), 1e-6);
}

TEST(ModelContracts, PretrainPartitionAndStrategyHeads) {
  const auto in = InputSpec::from(SceneParams{});
  ModelConfig cfg;
  Model inter(cfg, in, 1);
  cfg.strategy = Strategy::replacing;
  Model repl(cfg, in, 1);
  cfg.strategy = Strategy::multi_head;
  Model multi(cfg, in, 1);
  EXPECT_TRUE(inter.params().contains("binary.head.w"));
  EXPECT_FALSE(repl.params().contains("binary.head.w"));
  EXPECT_TRUE(multi.params().contains("binary.head.w"));
  EXPECT_FALSE(multi.params().contains("sparse.0.mix.value.w"));
  EXPECT_EQ(inter.fingerprint(), repl.fingerprint());
  for (const auto& [name, t] : inter.params().entries())
    EXPECT_EQ(in_pretrain_partition(name), !(name.starts_with("sparse.") || name.starts_with("semantic."))) << name;
  // the same seed yields the same trunk regardless of strategy
  for (const auto& [name, t] : repl.params().entries()) {
    if (!in_pretrain_partition(name)) continue;
    EXPECT_TRUE(std::equal(t.values().begin(), t.values().end(), inter.params().get(name).values().begin())) << name;
  }
  ModelConfig wider;
  wider.channels = 48;
  EXPECT_NE(Model(wider, in, 1).fingerprint(), inter.fingerprint());
}

TEST(ModelContracts, SemanticLossReachesTrunkButNotBinaryHead) {
  const auto& s = default_scene();
  for (auto strategy : {Strategy::intermediate, Strategy::multi_head}) {
    ModelConfig cfg;
    cfg.strategy = strategy;
    Model model(cfg, InputSpec::from(s.params), 5);
    const auto r = model.forward(s.views, s.rig, Mode::onboard);
    model.params().zero_grad();
    nn::focal_loss(r.semantic_logits, s.semantic.labels(), 2.0).backward();
    auto grad_norm = [&](const std::string& name) {
      double g = 0.0;
      for (double x : model.params().get(name).grad()) g += x * x;
      return g;
    };
    EXPECT_GT(grad_norm("encoder.conv1.w"), 0.0);
    EXPECT_GT(grad_norm("binary.up.w"), 0.0);
    EXPECT_EQ(grad_norm("binary.head.w"), 0.0);
  }
}

TEST(ModelContracts, ConfigRoundTripsThroughText) {
  ModelConfig c;
  c.transform = Transform::deformable;
  c.strategy = Strategy::multi_head;
  c.tau = 0.35;
  c.focal_alpha = {0.25, 1, 1, 1, 1};
  c.sparse_cross_attention = false;
  kv::Document d;
  write_model_config(d, c);
  ModelConfig back;
  read_model_config(kv::Document::parse(d.str()), back);
  const auto in = InputSpec::from(SceneParams{});
  EXPECT_EQ(architecture_fingerprint(back, in), architecture_fingerprint(c, in));
  EXPECT_EQ(back.strategy, Strategy::multi_head);
  EXPECT_EQ(back.tau, 0.35);
  EXPECT_EQ(back.focal_alpha, c.focal_alpha);
  ModelConfig bad;
  bad.compact_h = 5;
  EXPECT_THROW(bad.validate(in), Error);
}

}  // namespace
