#include "pipelab/attention.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pipelab {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

AttnChunkState empty_state(int rows, int head_dim) {
  AttnChunkState st;
  st.partial_output = Mat(rows, head_dim);
  st.row_max.assign(rows, kNegInf);
  st.row_sumexp.assign(rows, 0.0);
  return st;
}

void accumulate_chunk(AttnChunkState& st, const Mat& query, const KvChunk& chunk,
                      std::int64_t chunk_pos, std::int64_t total_kv, bool causal) {
  const Mat& k = chunk.keys;
  const Mat& v = chunk.values;
  if (k.cols != query.cols || v.rows != k.rows)
    throw std::invalid_argument("accumulate_chunk: dimension mismatch");
  if (st.partial_output.rows != query.rows ||
      st.partial_output.cols != v.cols)
    throw std::invalid_argument("accumulate_chunk: state shape mismatch");

  const double scale = 1.0 / std::sqrt(static_cast<double>(query.cols));
  for (int r = 0; r < query.rows; ++r) {
    // Query rows align with the last rows of the kv range.
    std::int64_t limit = causal ? total_kv - query.rows + r
                                : std::numeric_limits<std::int64_t>::max();
    int usable = 0;
    double chunk_max = kNegInf;
    std::vector<double> scores(k.rows, kNegInf);
    for (int j = 0; j < k.rows; ++j) {
      if (chunk_pos + j > limit) break;
      double s = 0.0;
      for (int c = 0; c < query.cols; ++c) s += query.at(r, c) * k.at(j, c);
      s *= scale;
      scores[j] = s;
      chunk_max = std::max(chunk_max, s);
      ++usable;
    }
    if (usable == 0) continue;
    double m_new = std::max(st.row_max[r], chunk_max);
    double corr = st.row_max[r] == kNegInf ? 0.0 : std::exp(st.row_max[r] - m_new);
    st.row_sumexp[r] *= corr;
    for (int c = 0; c < v.cols; ++c) st.partial_output.at(r, c) *= corr;
    for (int j = 0; j < usable; ++j) {
      double w = std::exp(scores[j] - m_new);
      st.row_sumexp[r] += w;
      for (int c = 0; c < v.cols; ++c)
        st.partial_output.at(r, c) += w * v.at(j, c);
    }
    st.row_max[r] = m_new;
  }
}

AttnChunkState merge_partials(const AttnChunkState& a, const AttnChunkState& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.partial_output.rows != b.partial_output.rows ||
      a.partial_output.cols != b.partial_output.cols)
    throw std::invalid_argument("merge_partials: shape mismatch");
  AttnChunkState out = empty_state(a.partial_output.rows, a.partial_output.cols);
  for (int r = 0; r < a.partial_output.rows; ++r) {
    double m = std::max(a.row_max[r], b.row_max[r]);
    if (m == kNegInf) continue;
    double wa = a.row_max[r] == kNegInf ? 0.0 : std::exp(a.row_max[r] - m);
    double wb = b.row_max[r] == kNegInf ? 0.0 : std::exp(b.row_max[r] - m);
    out.row_max[r] = m;
    out.row_sumexp[r] = a.row_sumexp[r] * wa + b.row_sumexp[r] * wb;
    for (int c = 0; c < a.partial_output.cols; ++c)
      out.partial_output.at(r, c) = a.partial_output.at(r, c) * wa +
                                    b.partial_output.at(r, c) * wb;
  }
  return out;
}

Mat finalize(const AttnChunkState& st) {
  Mat out(st.partial_output.rows, st.partial_output.cols);
  for (int r = 0; r < out.rows; ++r) {
    if (st.row_sumexp[r] <= 0.0) continue;  // fully masked row
    for (int c = 0; c < out.cols; ++c)
      out.at(r, c) = st.partial_output.at(r, c) / st.row_sumexp[r];
  }
  return out;
}

std::pair<Mat, AttnChunkState> chunk_attention(const Mat& query,
                                               const std::vector<KvChunk>& chunks,
                                               bool causal) {
  std::int64_t total_kv = 0;
  for (const KvChunk& ch : chunks) {
    if (ch.keys.rows != ch.values.rows)
      throw std::invalid_argument("chunk_attention: key/value row mismatch");
    total_kv += ch.keys.rows;
  }
  int head_dim = chunks.empty() ? query.cols : chunks.front().values.cols;
  AttnChunkState st = empty_state(query.rows, head_dim);
  std::int64_t pos = 0;
  for (const KvChunk& ch : chunks) {
    accumulate_chunk(st, query, ch, pos, total_kv, causal);
    pos += ch.keys.rows;
  }
  return {finalize(st), std::move(st)};
}

}  // namespace pipelab
