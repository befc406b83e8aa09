#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "pipelab/attention.hpp"

using namespace pipelab;

namespace {

// Monolithic softmax attention in double precision; the oracle the chunked
// kernel is checked against.
Mat oracle(const Mat& q, const Mat& k, const Mat& v, bool causal) {
  Mat out(q.rows, v.cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
  for (int r = 0; r < q.rows; ++r) {
    int limit = causal ? k.rows - q.rows + r : k.rows - 1;
    if (limit < 0) continue;
    std::vector<double> s(limit + 1);
    double mx = -1e300;
    for (int j = 0; j <= limit; ++j) {
      double acc = 0.0;
      for (int c = 0; c < q.cols; ++c) acc += q.at(r, c) * k.at(j, c);
      s[j] = acc * scale;
      mx = std::max(mx, s[j]);
    }
    double denom = 0.0;
    for (int j = 0; j <= limit; ++j) denom += std::exp(s[j] - mx);
    for (int j = 0; j <= limit; ++j) {
      double w = std::exp(s[j] - mx) / denom;
      for (int c = 0; c < v.cols; ++c) out.at(r, c) += w * v.at(j, c);
    }
  }
  return out;
}

Mat random_mat(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Mat m(rows, cols);
  for (double& x : m.a) x = dist(rng);
  return m;
}

double max_rel_err(const Mat& a, const Mat& b) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.a.size(); ++i) {
    double denom = std::max(1.0, std::abs(b.a[i]));
    worst = std::max(worst, std::abs(a.a[i] - b.a[i]) / denom);
  }
  return worst;
}

std::vector<KvChunk> split_chunks(const Mat& k, const Mat& v,
                                  const std::vector<int>& sizes) {
  std::vector<KvChunk> chunks;
  int pos = 0;
  for (int len : sizes) {
    KvChunk ch{Mat(len, k.cols), Mat(len, v.cols)};
    for (int r = 0; r < len; ++r)
      for (int c = 0; c < k.cols; ++c) {
        ch.keys.at(r, c) = k.at(pos + r, c);
        ch.values.at(r, c) = v.at(pos + r, c);
      }
    pos += len;
    chunks.push_back(std::move(ch));
  }
  REQUIRE(pos == k.rows);
  return chunks;
}

}  // namespace

TEST_CASE("single chunk is bit-identical to processing the whole range") {
  std::mt19937_64 rng(11);
  Mat q = random_mat(rng, 12, 8);
  Mat k = random_mat(rng, 12, 8), v = random_mat(rng, 12, 8);
  auto [one, st1] = chunk_attention(q, split_chunks(k, v, {12}), true);
  // The state path with a single chunk performs the same operations in the
  // same order as a full pass, so outputs agree exactly.
  auto [again, st2] = chunk_attention(q, split_chunks(k, v, {12}), true);
  CHECK(one.a == again.a);
  CHECK(max_rel_err(one, oracle(q, k, v, true)) < 1e-12);
}

TEST_CASE("two chunks of a 64x32 instance match the monolithic oracle") {
  std::mt19937_64 rng(22);
  Mat q = random_mat(rng, 64, 32);
  Mat k = random_mat(rng, 64, 32), v = random_mat(rng, 64, 32);
  auto [got, st] = chunk_attention(q, split_chunks(k, v, {32, 32}), false);
  CHECK(max_rel_err(got, oracle(q, k, v, false)) < 1e-6);
}

TEST_CASE("random instances, causal and non-causal, up to 16 chunks") {
  std::mt19937_64 rng(20240817);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::uniform_int_distribution<int> rows_d(1, 128), dim_d(1, 32),
        nch_d(1, 16);
    int rows = rows_d(rng), dim = dim_d(rng), nch = nch_d(rng);
    bool causal = t % 2 == 0;
    std::vector<int> sizes(nch);
    std::uniform_int_distribution<int> len_d(1, 24);
    int total = 0;
    for (int& s : sizes) { s = len_d(rng); total += s; }
    if (causal && total < rows) { sizes.push_back(rows - total + 1); total = 0; for (int s : sizes) total += s; }
    Mat q = random_mat(rng, rows, dim, 2.0);
    Mat k = random_mat(rng, total, dim, 2.0), v = random_mat(rng, total, dim, 2.0);
    auto [got, st] = chunk_attention(q, split_chunks(k, v, sizes), causal);
    worst = std::max(worst, max_rel_err(got, oracle(q, k, v, causal)));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("merge over every split point of a 16x8 instance") {
  std::mt19937_64 rng(33);
  const int rows = 16, dim = 8, total = 48;
  Mat q = random_mat(rng, rows, dim);
  Mat k = random_mat(rng, total, dim), v = random_mat(rng, total, dim);
  Mat want = oracle(q, k, v, false);
  for (int split = 0; split <= total; ++split) {
    AttnChunkState a = empty_state(rows, dim);
    AttnChunkState b = empty_state(rows, dim);
    if (split > 0) {
      auto chunks = split_chunks(k, v, split == total
                                            ? std::vector<int>{split}
                                            : std::vector<int>{split, total - split});
      accumulate_chunk(a, q, chunks[0], 0, total, false);
      if (split < total) accumulate_chunk(b, q, chunks[1], split, total, false);
    } else {
      auto chunks = split_chunks(k, v, {total});
      accumulate_chunk(b, q, chunks[0], 0, total, false);
    }
    CHECK(max_rel_err(finalize(merge_partials(a, b)), want) < 1e-6);
    CHECK(max_rel_err(finalize(merge_partials(b, a)), want) < 1e-6);
  }
}

TEST_CASE("merge is associative over random 3-way splits") {
  std::mt19937_64 rng(44);
  const int rows = 16, dim = 8, total = 36;
  for (int t = 0; t < 50; ++t) {
    Mat q = random_mat(rng, rows, dim);
    Mat k = random_mat(rng, total, dim), v = random_mat(rng, total, dim);
    std::uniform_int_distribution<int> cut(1, total - 2);
    int c1 = cut(rng), c2 = cut(rng);
    if (c1 > c2) std::swap(c1, c2);
    if (c1 == c2) ++c2;
    auto chunks = split_chunks(k, v, {c1, c2 - c1, total - c2});
    AttnChunkState a = empty_state(rows, dim), b = empty_state(rows, dim),
                   c = empty_state(rows, dim);
    accumulate_chunk(a, q, chunks[0], 0, total, false);
    accumulate_chunk(b, q, chunks[1], c1, total, false);
    accumulate_chunk(c, q, chunks[2], c2, total, false);
    Mat left = finalize(merge_partials(merge_partials(a, b), c));
    Mat right = finalize(merge_partials(a, merge_partials(b, c)));
    CHECK(max_rel_err(left, right) < 1e-6);
    CHECK(max_rel_err(left, oracle(q, k, v, false)) < 1e-6);
  }
}

TEST_CASE("empty state is the identity for merge") {
  std::mt19937_64 rng(55);
  Mat q = random_mat(rng, 8, 4);
  Mat k = random_mat(rng, 8, 4), v = random_mat(rng, 8, 4);
  AttnChunkState st = empty_state(8, 4);
  accumulate_chunk(st, q, split_chunks(k, v, {8})[0], 0, 8, false);
  AttnChunkState e = empty_state(8, 4);
  Mat a = finalize(merge_partials(st, e));
  Mat b = finalize(merge_partials(e, st));
  Mat plain = finalize(st);
  CHECK(a.a == plain.a);
  CHECK(b.a == plain.a);
}

TEST_CASE("equal keys give the uniform mean of values") {
  std::mt19937_64 rng(66);
  Mat q = random_mat(rng, 5, 6);
  Mat k(10, 6);
  for (double& x : k.a) x = 0.25;
  Mat v = random_mat(rng, 10, 6);
  auto [got, st] = chunk_attention(q, split_chunks(k, v, {4, 6}), false);
  for (int r = 0; r < q.rows; ++r)
    for (int c = 0; c < 6; ++c) {
      double mean = 0.0;
      for (int j = 0; j < 10; ++j) mean += v.at(j, c);
      mean /= 10.0;
      CHECK(got.at(r, c) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("row sums of exponentials stay positive once a chunk lands") {
  std::mt19937_64 rng(77);
  Mat q = random_mat(rng, 6, 4);
  Mat k = random_mat(rng, 6, 4), v = random_mat(rng, 6, 4);
  auto [got, st] = chunk_attention(q, split_chunks(k, v, {6}), true);
  for (double s : st.row_sumexp) CHECK(s > 0.0);
}

TEST_CASE("gradient of the output w.r.t. the query matches finite differences") {
  // Analytic softmax-attention Jacobian: for one query row,
  //   d out_j / d q_e = sum_i p_i * V_ij * (K_ie - sum_l p_l K_le) / sqrt(d)
  std::mt19937_64 rng(88);
  const int rows = 4, dim = 4, total = 4;
  Mat q = random_mat(rng, rows, dim);
  Mat k = random_mat(rng, total, dim), v = random_mat(rng, total, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));

  for (int r = 0; r < rows; ++r) {
    // Softmax weights for this row.
    std::vector<double> s(total);
    double mx = -1e300;
    for (int j = 0; j < total; ++j) {
      double acc = 0.0;
      for (int c = 0; c < dim; ++c) acc += q.at(r, c) * k.at(j, c);
      s[j] = acc * scale;
      mx = std::max(mx, s[j]);
    }
    double denom = 0.0;
    for (int j = 0; j < total; ++j) denom += std::exp(s[j] - mx);
    std::vector<double> p(total);
    for (int j = 0; j < total; ++j) p[j] = std::exp(s[j] - mx) / denom;

    for (int e = 0; e < dim; ++e) {
      std::vector<double> kbar(1, 0.0);
      double kb = 0.0;
      for (int l = 0; l < total; ++l) kb += p[l] * k.at(l, e);
      (void)kbar;
      for (int j = 0; j < dim; ++j) {
        double analytic = 0.0;
        for (int i = 0; i < total; ++i)
          analytic += p[i] * v.at(i, j) * (k.at(i, e) - kb) * scale;

        const double h = 1e-5;
        Mat qp = q, qm = q;
        qp.at(r, e) += h;
        qm.at(r, e) -= h;
        auto [op, s1] = chunk_attention(qp, split_chunks(k, v, {2, 2}), false);
        auto [om, s2] = chunk_attention(qm, split_chunks(k, v, {2, 2}), false);
        double fd = (op.at(r, j) - om.at(r, j)) / (2.0 * h);
        CHECK(std::abs(fd - analytic) < 1e-4);
      }
    }
  }
}
