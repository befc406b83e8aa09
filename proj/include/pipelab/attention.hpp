#pragma once

// Numeric chunked-attention kernel. Proves that computing causal attention
// chunk by chunk and merging partial results with running row-max /
// sum-of-exp statistics reproduces the monolithic softmax exactly (up to
// floating-point accumulation error). Double precision throughout; this is
// a correctness reference, not a performance kernel.

#include <cstdint>
#include <vector>

namespace pipelab {

struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
};

struct KvChunk {
  Mat keys;    // chunk_len x head_dim
  Mat values;  // chunk_len x head_dim
};

// Streaming state over processed chunks. partial_output holds the
// exp-weighted (unnormalized) value accumulation; dividing each row by
// row_sumexp yields the attention output so far.
struct AttnChunkState {
  Mat partial_output;
  std::vector<double> row_max;     // -inf until a row sees an unmasked key
  std::vector<double> row_sumexp;  // 0 until a row sees an unmasked key

  bool empty() const { return row_max.empty(); }
};

AttnChunkState empty_state(int rows, int head_dim);

// Fold one KV chunk into the state. chunk_pos is the global position of the
// chunk's first key; with causal=true, query row r (aligned to the last
// rows of the full kv range of total_kv positions) attends keys at global
// positions <= total_kv - rows + r.
void accumulate_chunk(AttnChunkState& st, const Mat& query, const KvChunk& chunk,
                      std::int64_t chunk_pos, std::int64_t total_kv, bool causal);

// Combine two partial states over disjoint chunk ranges. Associative and
// commutative up to floating-point tolerance; the empty state is the
// identity.
AttnChunkState merge_partials(const AttnChunkState& a, const AttnChunkState& b);

Mat finalize(const AttnChunkState& st);

// Attention over an ordered list of KV chunks; returns the output and the
// final streaming state.
std::pair<Mat, AttnChunkState> chunk_attention(const Mat& query,
                                               const std::vector<KvChunk>& chunks,
                                               bool causal);

}  // namespace pipelab
