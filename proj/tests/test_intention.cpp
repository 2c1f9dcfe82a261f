#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "shpjf/errors.hpp"
#include "shpjf/intention.hpp"
#include "shpjf/ops.hpp"

using namespace shpjf;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0, bool grad = false) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  std::vector<double> v;
  for (auto r : perm)
    for (std::size_t c = 0; c < t.cols(); ++c) v.push_back(t.at(r, c));
  return Tensor::from({t.rows(), t.cols()}, v);
}

void expect_near(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.at(i), b.at(i), tol) << "entry " << i;
}

void expect_column_stochastic(const Tensor& p) {
  for (std::size_t c = 0; c < p.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < p.rows(); ++r) {
      EXPECT_GE(p.at(r, c), 0.0);
      s += p.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

MultiHeadAttention identity_attention(std::size_t d) {
  MultiHeadAttention a;
  a.config = {.heads = 1, .model_dim = d};
  a.wq = a.wk = a.wv = a.wo = Tensor::identity(d);
  return a;
}

// Scaled dot-product attention for one query row and one head.
std::vector<double> reference_attend(const Tensor& query, const Tensor& keys, const Tensor& values,
                                     const MultiHeadAttention& a) {
  const auto q = ops::matmul(query, a.wq), k = ops::matmul(keys, a.wk), v = ops::matmul(values, a.wv);
  const std::size_t n = keys.rows(), d = q.cols();
  std::vector<double> s(n);
  for (std::size_t j = 0; j < n; ++j) {
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += q.at(0, c) * k.at(j, c);
    s[j] = std::exp(dot / std::sqrt(static_cast<double>(d)));
  }
  const double z = std::accumulate(s.begin(), s.end(), 0.0);
  std::vector<double> mixed(d, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < d; ++c) mixed[c] += s[j] / z * v.at(j, c);
  std::vector<double> out(a.wo.cols(), 0.0);
  for (std::size_t c = 0; c < out.size(); ++c)
    for (std::size_t r = 0; r < d; ++r) out[c] += mixed[r] * a.wo.at(r, c);
  return out;
}

}  // namespace

TEST(ClusterJobStream, ZeroWeightsGiveUniformAssignment) {
  std::mt19937_64 rng(1);
  const auto h = random_tensor({5, 4}, rng);
  ClusterLayer layer{Tensor::zeros({3, 4}), Tensor::zeros({3})};
  const auto out = cluster_job_stream(h, layer);
  for (double p : out.assignment.values()) EXPECT_NEAR(p, 1.0 / 3, 1e-15);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < 5; ++i) s += h.at(i, c);
      EXPECT_NEAR(out.clustered.at(r, c), s / 3, 1e-12);
    }
}

TEST(ClusterJobStream, SingleEntryRowsAreScaledCopies) {
  std::mt19937_64 rng(2);
  const auto h = random_tensor({1, 4}, rng);
  const auto layer = make_cluster_layer(4, 4, rng);
  const auto out = cluster_job_stream(h, layer);
  const auto w = ops::softmax(ops::add(ops::matmul_nt(h, layer.weight), ops::reshape(layer.bias, {1, 4})), 1);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_GE(w.at(r), 0.0);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out.clustered.at(r, c), w.at(r) * h.at(0, c), 1e-14);
  }
}

TEST(ClusterJobStream, PermutationInvariant) {
  std::mt19937_64 rng(3);
  const auto h = random_tensor({5, 6}, rng);
  const auto layer = make_cluster_layer(3, 6, rng);
  const auto base = cluster_job_stream(h, layer);
  std::vector<std::size_t> perm{0, 1, 2, 3, 4};
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    expect_near(cluster_job_stream(permute_rows(h, perm), layer).clustered, base.clustered, 1e-12);
  }
}

TEST(ClusterJobStream, ColumnsSumToOne) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto layer = make_cluster_layer(4, 5, rng);
    expect_column_stochastic(cluster_job_stream(random_tensor({7, 5}, rng, 5.0), layer).assignment);
  }
}

TEST(ClusterJobStream, HistoryAxisNormalizesRows) {
  std::mt19937_64 rng(5);
  const auto layer = make_cluster_layer(4, 5, rng);
  const auto p = cluster_job_stream(random_tensor({6, 5}, rng), layer, ClusterSoftmaxAxis::history).assignment;
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 6; ++c) s += p.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(ClusterJobStream, NoClustersIsConfigError) {
  std::mt19937_64 rng(6);
  EXPECT_THROW(make_cluster_layer(0, 4, rng), ConfigError);
}

TEST(ClusterJobStream, DuplicatedEntryStaysStochasticAndFinite) {
  std::mt19937_64 rng(7);
  const auto h = random_tensor({4, 5}, rng);
  const auto layer = make_cluster_layer(4, 5, rng);
  const Tensor parts[] = {h, ops::slice_rows(h, 2, 3)};
  const auto dup = cluster_job_stream(ops::concat_rows(parts), layer);
  expect_column_stochastic(dup.assignment);
  for (double v : dup.clustered.values()) EXPECT_TRUE(std::isfinite(v));
  // The copy gets the same soft assignment as the original entry.
  for (std::size_t r = 0; r < 4; ++r) EXPECT_DOUBLE_EQ(dup.assignment.at(r, 2), dup.assignment.at(r, 4));
  // C_J moves by exactly the duplicated entry's contribution.
  const auto base = cluster_job_stream(h, layer);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c)
      EXPECT_NEAR(dup.clustered.at(r, c), base.clustered.at(r, c) + base.assignment.at(r, 2) * h.at(2, c), 1e-12);
}

TEST(MultiHeadAttend, SingleKeyReturnsItsValue) {
  std::mt19937_64 rng(8);
  const auto a = identity_attention(4);
  const auto v = random_tensor({1, 4}, rng);
  expect_near(multi_head_attend(random_tensor({1, 4}, rng), random_tensor({1, 4}, rng), v, a), v, 1e-15);
}

TEST(MultiHeadAttend, IdenticalKeysSplitEvenly) {
  std::mt19937_64 rng(9);
  auto a = make_attention({.heads = 2, .model_dim = 4}, rng);
  const auto key = random_tensor({1, 4}, rng);
  const Tensor parts[] = {key, key};
  AttentionWeights w;
  multi_head_attend(random_tensor({1, 4}, rng), ops::concat_rows(parts), random_tensor({2, 4}, rng), a, &w);
  ASSERT_EQ(w.per_head.size(), 2u);
  for (const auto& p : w.per_head)
    for (double x : p.values()) EXPECT_NEAR(x, 0.5, 1e-15);
}

TEST(MultiHeadAttend, MatchesScaledDotProductReference) {
  std::mt19937_64 rng(10);
  const auto a = make_attention({.heads = 1, .model_dim = 6}, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = random_tensor({1, 6}, rng), k = random_tensor({2, 6}, rng), v = random_tensor({2, 6}, rng);
    const auto out = multi_head_attend(q, k, v, a);
    const auto ref = reference_attend(q, k, v, a);
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(out.at(0, c), ref[c], 1e-10);
  }
}

TEST(MultiHeadAttend, RowCountMismatchThrows) {
  std::mt19937_64 rng(11);
  const auto a = make_attention({.heads = 1, .model_dim = 4}, rng);
  EXPECT_THROW(multi_head_attend(random_tensor({1, 4}, rng), random_tensor({3, 4}, rng), random_tensor({2, 4}, rng), a),
               DimensionError);
}

TEST(MultiHeadAttend, HeadsMustDivideWidth) {
  std::mt19937_64 rng(12);
  EXPECT_THROW(make_attention({.heads = 3, .model_dim = 16}, rng), ConfigError);
}

TEST(JobIntention, SingleClusterIgnoresQueryDirection) {
  std::mt19937_64 rng(13);
  const auto a = make_attention({.heads = 1, .model_dim = 4}, rng);
  const auto cj = random_tensor({1, 4}, rng);
  const auto e1 = job_intention(random_tensor({1, 4}, rng), cj, a);
  const auto e2 = job_intention(random_tensor({1, 4}, rng), cj, a);
  expect_near(e1, e2, 1e-14);
  expect_near(e1, ops::matmul(ops::matmul(cj, a.wv), a.wo), 1e-14);
}

TEST(JobIntention, WeightsAreDistributions) {
  std::mt19937_64 rng(14);
  const auto a = make_attention({.heads = 2, .model_dim = 8}, rng);
  AttentionWeights w;
  job_intention(random_tensor({3, 8}, rng), random_tensor({4, 8}, rng, 3.0), a, &w);
  for (const auto& p : w.per_head)
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) {
        EXPECT_GE(p.at(r, c), 0.0);
        s += p.at(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(JobIntention, ComposesClusteringAndAttention) {
  std::mt19937_64 rng(15);
  const auto layer = make_cluster_layer(4, 6, rng);
  const auto a = make_attention({.heads = 1, .model_dim = 6}, rng);
  const auto h = random_tensor({5, 6}, rng), hj = random_tensor({1, 6}, rng);
  const auto cj = cluster_job_stream(h, layer).clustered;
  const auto e = job_intention(hj, cj, a);
  const auto ref = reference_attend(hj, cj, cj, a);
  for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(e.at(0, c), ref[c], 1e-10);
}

TEST(ClusterJoint, ZeroWeightsGiveUniformMeans) {
  std::mt19937_64 rng(16);
  const auto hq = random_tensor({4, 3}, rng), hj = random_tensor({4, 3}, rng);
  ClusterLayer layer{Tensor::zeros({2, 6}), Tensor::zeros({2})};
  const auto out = cluster_joint(hq, hj, layer);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      double sq = 0.0, sj = 0.0;
      for (std::size_t i = 0; i < 4; ++i) sq += hq.at(i, c), sj += hj.at(i, c);
      EXPECT_NEAR(out.clustered_query.at(r, c), sq / 2, 1e-12);
      EXPECT_NEAR(out.clustered_job.at(r, c), sj / 2, 1e-12);
    }
}

TEST(ClusterJoint, RepeatedQueryGivesProportionalRows) {
  std::mt19937_64 rng(17);
  const auto q = random_tensor({1, 4}, rng);
  const auto hq = ops::repeat_rows(q, 5);
  const auto layer = make_cluster_layer(3, 8, rng);
  const auto out = cluster_joint(hq, random_tensor({5, 4}, rng), layer);
  for (std::size_t r = 0; r < 3; ++r) {
    const double ratio = out.clustered_query.at(r, 0) / q.at(0, 0);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out.clustered_query.at(r, c), ratio * q.at(0, c), 1e-12);
  }
}

TEST(ClusterJoint, JointPermutationInvariant) {
  std::mt19937_64 rng(18);
  const auto hq = random_tensor({6, 4}, rng), hj = random_tensor({6, 4}, rng);
  const auto layer = make_cluster_layer(4, 8, rng);
  const auto base = cluster_joint(hq, hj, layer);
  expect_column_stochastic(base.assignment);
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto out = cluster_joint(permute_rows(hq, perm), permute_rows(hj, perm), layer);
    expect_near(out.clustered_query, base.clustered_query, 1e-12);
    expect_near(out.clustered_job, base.clustered_job, 1e-12);
  }
}

TEST(ClusterJoint, LengthMismatchThrows) {
  std::mt19937_64 rng(19);
  const auto layer = make_cluster_layer(2, 8, rng);
  EXPECT_THROW(cluster_joint(random_tensor({3, 4}, rng), random_tensor({2, 4}, rng), layer), ValidationError);
}

TEST(QueryIntention, SingleClusterReadsProjectedValue) {
  std::mt19937_64 rng(20);
  const auto a = make_attention({.heads = 1, .model_dim = 4}, rng);
  const auto cjp = random_tensor({1, 4}, rng);
  const auto e = query_intention(random_tensor({1, 4}, rng), random_tensor({1, 4}, rng), cjp, a);
  expect_near(e, ops::matmul(ops::matmul(cjp, a.wv), a.wo), 1e-14);
}

TEST(QueryIntention, IdenticalKeysAverageValues) {
  std::mt19937_64 rng(21);
  const auto a = make_attention({.heads = 1, .model_dim = 4}, rng);
  const auto cq = ops::repeat_rows(random_tensor({1, 4}, rng), 3);
  const auto cjp = random_tensor({3, 4}, rng);
  const auto e = query_intention(random_tensor({1, 4}, rng), cq, cjp, a);
  expect_near(e, ops::matmul(ops::matmul(ops::mean_rows(cjp), a.wv), a.wo), 1e-14);
}

TEST(QueryIntention, KeysFromQueriesValuesFromJobs) {
  std::mt19937_64 rng(22);
  const auto a = make_attention({.heads = 1, .model_dim = 5}, rng);
  const auto ht = random_tensor({1, 5}, rng), cq = random_tensor({4, 5}, rng), cjp = random_tensor({4, 5}, rng);
  const auto e = query_intention(ht, cq, cjp, a);
  const auto ref = reference_attend(ht, cq, cjp, a);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(e.at(0, c), ref[c], 1e-10);
  const auto swapped = reference_attend(ht, cjp, cq, a);
  double diff = 0.0;
  for (std::size_t c = 0; c < 5; ++c) diff += std::abs(e.at(0, c) - swapped[c]);
  EXPECT_GT(diff, 1e-6);
}

TEST(Intentions, InvariantUnderHistoryPermutation) {
  std::mt19937_64 rng(23);
  const auto jl = make_cluster_layer(4, 6, rng), ql = make_cluster_layer(4, 12, rng);
  const auto a = make_attention({.heads = 2, .model_dim = 6}, rng);
  const auto hq = random_tensor({7, 6}, rng), hj = random_tensor({7, 6}, rng);
  const auto hjob = random_tensor({1, 6}, rng), htj = random_tensor({1, 6}, rng);
  auto intentions = [&](const Tensor& q, const Tensor& j) {
    const auto joint = cluster_joint(q, j, ql);
    return std::pair{job_intention(hjob, cluster_job_stream(j, jl).clustered, a),
                     query_intention(htj, joint.clustered_query, joint.clustered_job, a)};
  };
  const auto [ej, eq] = intentions(hq, hj);
  std::vector<std::size_t> perm{6, 2, 4, 0, 1, 5, 3};
  const auto [pj, pq] = intentions(permute_rows(hq, perm), permute_rows(hj, perm));
  expect_near(pj, ej, 1e-10);
  expect_near(pq, eq, 1e-10);
}

TEST(FuseIntentions, Boundaries) {
  const auto ej = Tensor::from({1, 2}, {2, 0}), eq = Tensor::from({1, 2}, {0, 2});
  expect_near(fuse_intentions(ej, eq, 1.0), ej, 0.0);
  expect_near(fuse_intentions(ej, eq, 0.0), eq, 0.0);
  expect_near(fuse_intentions(ej, eq, 0.5), Tensor::from({1, 2}, {1, 1}), 0.0);
  EXPECT_THROW(fuse_intentions(ej, eq, 1.5), ConfigError);
  EXPECT_THROW(fuse_intentions(ej, eq, -0.1), ConfigError);
}

TEST(FuseIntentions, GradientsAreLambdaAndComplement) {
  const double lambda = 0.6;
  auto ej = Tensor::from({1, 3}, {0.3, -1, 2}, true), eq = Tensor::from({1, 3}, {1, 0.5, -0.2}, true);
  const auto upstream = Tensor::from({1, 3}, {0.7, -1.3, 2.1});
  Tape tape;
  {
    Tape::Scope scope(tape);
    backward(ops::sum(ops::mul(fuse_intentions(ej, eq, lambda), upstream)), tape);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(ej.grad()[i], lambda * upstream.at(i));
    EXPECT_DOUBLE_EQ(eq.grad()[i], (1 - lambda) * upstream.at(i));
  }
  std::vector<Tensor> params{ej, eq};
  EXPECT_LT(grad_check([&] { return ops::sum(ops::mul(fuse_intentions(params[0], params[1], lambda), upstream)); },
                       params, 1e-6),
            1e-5);
}

TEST(IntentionFeatures, EqualInputsZeroTheDifference) {
  const auto h = Tensor::from({1, 3}, {1, -2, 3});
  const auto f = intention_features(h, h);
  const std::vector<double> expected{1, -2, 3, 1, -2, 3, 0, 0, 0, 1, 4, 9};
  EXPECT_EQ(std::vector<double>(f.values().begin(), f.values().end()), expected);
}

TEST(IntentionFeatures, ZeroFusedVector) {
  const auto h = Tensor::from({1, 2}, {4, -5});
  const auto f = intention_features(Tensor::zeros({1, 2}), h);
  const std::vector<double> expected{0, 0, 4, -5, -4, 5, 0, 0};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(f.at(i), expected[i]);
}

TEST(IntentionMatch, MatchesFeatureLayoutAndReferenceMlp) {
  std::mt19937_64 rng(24);
  const std::size_t d = 4;
  const auto mlp = make_mlp({4 * d, 8, 5}, rng);
  const auto e = random_tensor({1, d}, rng), h = random_tensor({1, d}, rng);
  std::vector<double> x;
  for (std::size_t i = 0; i < d; ++i) x.push_back(e.at(i));
  for (std::size_t i = 0; i < d; ++i) x.push_back(h.at(i));
  for (std::size_t i = 0; i < d; ++i) x.push_back(e.at(i) - h.at(i));
  for (std::size_t i = 0; i < d; ++i) x.push_back(e.at(i) * h.at(i));
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const auto& w = mlp.weights[layer];
    std::vector<double> y(w.cols(), 0.0);
    for (std::size_t c = 0; c < w.cols(); ++c) {
      y[c] = mlp.biases[layer].at(c);
      for (std::size_t r = 0; r < w.rows(); ++r) y[c] += x[r] * w.at(r, c);
      if (layer == 0) y[c] = std::max(0.0, y[c]);
    }
    x = y;
  }
  const auto out = intention_match(e, h, mlp);
  ASSERT_EQ(out.shape(), (Shape{1, 5}));
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(out.at(0, c), x[c], 1e-10);
}

TEST(IntentionMatch, WidthMismatchIsConfigError) {
  std::mt19937_64 rng(25);
  const auto mlp = make_mlp({12, 4}, rng);
  EXPECT_THROW(intention_match(random_tensor({1, 4}, rng), random_tensor({1, 4}, rng), mlp), ConfigError);
}
