#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mstn/grid.hpp"
#include "mstn/score.hpp"
#include "mstn/tensor.hpp"

namespace mstn {

// ---------------------------------------------------------------------------
// Bar patterns (Eq. 7 style)
// ---------------------------------------------------------------------------

// Exact (start, duration) in twelfths-of-a-beat, relative to the bar start.
// Durations are clipped at the barline so a bar's tuples never sum past a
// whole bar.
struct RhythmTuple {
    std::int64_t start = 0;
    std::int64_t duration = 0;

    friend bool operator==(const RhythmTuple& a, const RhythmTuple& b) {
        return a.start == b.start && a.duration == b.duration;
    }
    friend bool operator<(const RhythmTuple& a, const RhythmTuple& b) {
        return a.start != b.start ? a.start < b.start : a.duration < b.duration;
    }
};

// NULL intervals (piece start, notes after rests) are empty optionals.
using IntervalValue = std::optional<int>;

struct BarPattern {
    std::vector<RhythmTuple> rhythm;       // note onsets only
    std::vector<IntervalValue> intervals;  // one per note

    bool empty() const { return rhythm.empty(); }
};

// Per-bar rhythm tuples and staff intervals. A note's interval is taken from
// the previous sounding event (crossing barlines); the first note and notes
// preceded by a rest get NULL.
inline std::vector<BarPattern> bar_patterns(const Score& s) {
    std::vector<BarPattern> bars(static_cast<std::size_t>(s.n_bars));
    const Note* prev = nullptr;
    for (const Note& n : s.notes) {
        if (n.is_rest) {
            prev = &n;
            continue;
        }
        const std::int64_t bar = n.onset / kTicksPerBar;
        const std::int64_t bar_start_tw = bar * kTwelfthsPerBar;
        const std::int64_t on_tw = tick_to_twelfths(n.onset);
        const std::int64_t end_tick =
            std::min(n.onset + n.duration, (bar + 1) * static_cast<std::int64_t>(kTicksPerBar));
        const std::int64_t end_tw = tick_to_twelfths(end_tick);
        BarPattern& bp = bars[static_cast<std::size_t>(bar)];
        bp.rhythm.push_back({on_tw - bar_start_tw, end_tw - on_tw});
        if (prev == nullptr || prev->is_rest) {
            bp.intervals.push_back(std::nullopt);
        } else {
            bp.intervals.push_back(staff_interval(prev->pitch, n.pitch));
        }
        prev = &n;
    }
    return bars;
}

// ---------------------------------------------------------------------------
// Self-similarity matrices (Eq. 8 style)
// ---------------------------------------------------------------------------

struct SelfSimilarityMatrix {
    enum class Kind { rhythm, interval };
    Kind kind = Kind::rhythm;
    RealArray values;
};

namespace metric_detail {

// Bar timeline as tuples including the complement spans (rests and sustains),
// so identical bars always match with weight 1. kind: 0 = note, 1 = gap.
struct SpanTuple {
    std::int64_t start, duration;
    int kind;
    friend bool operator<(const SpanTuple& a, const SpanTuple& b) {
        if (a.start != b.start) return a.start < b.start;
        if (a.duration != b.duration) return a.duration < b.duration;
        return a.kind < b.kind;
    }
    friend bool operator==(const SpanTuple& a, const SpanTuple& b) {
        return a.start == b.start && a.duration == b.duration && a.kind == b.kind;
    }
};

inline std::vector<SpanTuple> complete_with_gaps(const BarPattern& bp) {
    std::vector<SpanTuple> spans;
    std::int64_t cursor = 0;
    for (const RhythmTuple& t : bp.rhythm) {
        if (t.start > cursor) spans.push_back({cursor, t.start - cursor, 1});
        spans.push_back({t.start, t.duration, 0});
        cursor = t.start + t.duration;
    }
    if (cursor < kTwelfthsPerBar) spans.push_back({cursor, kTwelfthsPerBar - cursor, 1});
    return spans;
}

// rhythm similarity: matched span duration / bar duration (exact rationals,
// computed over twelfths and divided once)
inline double rhythm_similarity(const BarPattern& a, const BarPattern& b) {
    if (a.empty() && b.empty()) return 1.0;
    if (a.empty() != b.empty()) return 0.0;
    const std::vector<SpanTuple> sa = complete_with_gaps(a);
    const std::vector<SpanTuple> sb = complete_with_gaps(b);
    std::int64_t matched = 0;
    for (const SpanTuple& t : sa) {
        if (std::find(sb.begin(), sb.end(), t) != sb.end()) matched += t.duration;
    }
    return static_cast<double>(matched) / static_cast<double>(kTwelfthsPerBar);
}

// interval similarity: longest common contiguous run / max note count
inline double interval_similarity(const BarPattern& a, const BarPattern& b) {
    if (a.empty() && b.empty()) return 1.0;
    if (a.empty() != b.empty()) return 0.0;
    const std::size_t n = a.intervals.size();
    const std::size_t m = b.intervals.size();
    std::vector<std::size_t> dp(m + 1, 0);
    std::size_t best = 0;
    for (std::size_t i = 1; i <= n; ++i) {
        std::vector<std::size_t> next(m + 1, 0);
        for (std::size_t j = 1; j <= m; ++j) {
            if (a.intervals[i - 1] == b.intervals[j - 1]) {
                next[j] = dp[j - 1] + 1;
                best = std::max(best, next[j]);
            }
        }
        dp = std::move(next);
    }
    return static_cast<double>(best) / static_cast<double>(std::max(n, m));
}

}  // namespace metric_detail

inline SelfSimilarityMatrix ssm(const Score& s, SelfSimilarityMatrix::Kind kind) {
    const std::vector<BarPattern> bars = bar_patterns(s);
    const Eigen::Index L = static_cast<Eigen::Index>(bars.size());
    SelfSimilarityMatrix out;
    out.kind = kind;
    out.values = RealArray::Zero(L, L);
    for (Eigen::Index i = 0; i < L; ++i) {
        for (Eigen::Index j = i; j < L; ++j) {
            const double v =
                kind == SelfSimilarityMatrix::Kind::rhythm
                    ? metric_detail::rhythm_similarity(bars[static_cast<std::size_t>(i)],
                                                       bars[static_cast<std::size_t>(j)])
                    : metric_detail::interval_similarity(bars[static_cast<std::size_t>(i)],
                                                         bars[static_cast<std::size_t>(j)]);
            out.values(i, j) = v;
            out.values(j, i) = v;
        }
    }
    return out;
}

// RMSE between two same-kind SSMs over their overlapping top-left crop.
inline double structure_similarity(const SelfSimilarityMatrix& a,
                                   const SelfSimilarityMatrix& b) {
    if (a.kind != b.kind) throw ShapeMismatch("structure_similarity: SSM kinds differ");
    const Eigen::Index n = std::min(a.values.rows(), b.values.rows());
    if (n == 0) return 0.0;
    double sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = a.values(i, j) - b.values(i, j);
            sq += d * d;
        }
    }
    return std::sqrt(sq / static_cast<double>(n * n));
}

// ---------------------------------------------------------------------------
// Duplicate rates
// ---------------------------------------------------------------------------

enum class PatternKind { rhythm, interval };

// Fraction of position-aligned bars with exactly equal content of the given
// kind, over the shorter piece.
inline double duplicate_rate(const Score& a, const Score& b, PatternKind kind) {
    const std::vector<BarPattern> pa = bar_patterns(a);
    const std::vector<BarPattern> pb = bar_patterns(b);
    const std::size_t n = std::min(pa.size(), pb.size());
    if (n == 0) return 0.0;
    std::size_t same = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (kind == PatternKind::rhythm) {
            same += pa[i].rhythm == pb[i].rhythm;
        } else {
            same += pa[i].intervals == pb[i].intervals;
        }
    }
    return static_cast<double>(same) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Repeat statistics
// ---------------------------------------------------------------------------

enum class RepeatKind { D, DI };

// Sparse count histograms: RC per lookback (bars), RD per repeat duration
// (bars, floored), RO per onset tick within the bar.
struct RepeatHistograms {
    RepeatKind kind = RepeatKind::D;
    std::map<int, std::int64_t> rc;
    std::map<int, std::int64_t> rd;
    std::map<int, std::int64_t> ro;

    bool empty() const { return rc.empty() && rd.empty() && ro.empty(); }
};

namespace metric_detail {

enum class FrameKind : char { note, rest, hold };

struct FrameView {
    std::vector<FrameKind> kinds;                 // one per tick
    std::vector<IntervalValue> intervals;         // valid at note onsets
};

inline FrameView frame_view(const Score& s) {
    FrameView fv;
    const std::size_t n_ticks = static_cast<std::size_t>(s.n_bars) * kTicksPerBar;
    fv.kinds.assign(n_ticks, FrameKind::hold);
    fv.intervals.assign(n_ticks, std::nullopt);
    const Note* prev = nullptr;
    for (const Note& n : s.notes) {
        const std::size_t at = static_cast<std::size_t>(n.onset);
        if (n.is_rest) {
            fv.kinds[at] = FrameKind::rest;
        } else {
            fv.kinds[at] = FrameKind::note;
            if (prev != nullptr && !prev->is_rest) {
                fv.intervals[at] = staff_interval(prev->pitch, n.pitch);
            }
        }
        prev = &n;
    }
    return fv;
}

inline bool ticks_equal(const FrameView& fv, std::size_t a, std::size_t b, RepeatKind kind) {
    if (fv.kinds[a] != fv.kinds[b]) return false;
    if (kind == RepeatKind::DI && fv.kinds[a] == FrameKind::note &&
        fv.intervals[a] != fv.intervals[b]) {
        return false;
    }
    return true;
}

}  // namespace metric_detail

// Maximal repeated segments of at least one bar at every bar-aligned lookback
// in [1, max_lookback] bars. A repeat at lookback l is a maximal run of ticks
// whose frame pattern (D: onset/rest/hold skeleton; DI: skeleton plus note
// intervals) equals the pattern l bars earlier.
inline RepeatHistograms repeat_statistics(const Score& s, RepeatKind kind,
                                          int max_lookback_bars) {
    using metric_detail::FrameView;
    RepeatHistograms out;
    out.kind = kind;
    const FrameView fv = metric_detail::frame_view(s);
    const std::size_t n_ticks = fv.kinds.size();
    max_lookback_bars = std::min(max_lookback_bars, s.n_bars - 1);
    for (int lb = 1; lb <= max_lookback_bars; ++lb) {
        const std::size_t shift = static_cast<std::size_t>(lb) * kTicksPerBar;
        std::size_t run = 0;
        for (std::size_t t = shift; t <= n_ticks; ++t) {
            const bool eq = t < n_ticks && metric_detail::ticks_equal(fv, t, t - shift, kind);
            if (eq) {
                ++run;
                continue;
            }
            if (run >= kTicksPerBar) {
                const std::size_t start = t - run;
                out.rc[lb] += 1;
                out.rd[static_cast<int>(run / kTicksPerBar)] += 1;
                out.ro[static_cast<int>(start % kTicksPerBar)] += 1;
            }
            run = 0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Distributions and KL divergence
// ---------------------------------------------------------------------------

using Histogram = std::map<std::string, double>;

// Normalized pitch-name and duration (in beats) frequencies over all notes.
inline std::pair<Histogram, Histogram> pitch_duration_distributions(
    const std::vector<Score>& corpus) {
    if (corpus.empty()) throw EmptyCorpus("no scores for distributions");
    Histogram pd, dd;
    double notes = 0.0;
    for (const Score& s : corpus) {
        for (const Note& n : s.notes) {
            if (n.is_rest) continue;
            pd[n.pitch.str()] += 1.0;
            dd[tick_span_beats(n.onset, n.duration).str()] += 1.0;
            notes += 1.0;
        }
    }
    if (notes > 0.0) {
        for (auto& [_, v] : pd) v /= notes;
        for (auto& [_, v] : dd) v /= notes;
    }
    return {pd, dd};
}

// KL(p || q) over the union support with additive smoothing then
// renormalization. p is the training distribution, q the generated one.
inline double kl_divergence(const Histogram& p, const Histogram& q, double eps = 1e-8) {
    std::map<std::string, std::pair<double, double>> joint;
    for (const auto& [k, v] : p) joint[k].first = v;
    for (const auto& [k, v] : q) joint[k].second = v;
    double zp = 0.0, zq = 0.0;
    for (const auto& [_, pq] : joint) {
        zp += pq.first + eps;
        zq += pq.second + eps;
    }
    if (zp <= 0.0 || zq <= 0.0) return 0.0;
    double kl = 0.0;
    for (const auto& [_, pq] : joint) {
        const double pi = (pq.first + eps) / zp;
        const double qi = (pq.second + eps) / zq;
        kl += pi * std::log(pi / qi);
    }
    return kl;
}

inline Histogram histogram_from_counts(const std::map<int, std::int64_t>& counts) {
    Histogram h;
    for (const auto& [k, v] : counts) h[std::to_string(k)] = static_cast<double>(v);
    return h;
}

// Corpus-level repeat histograms (counts summed over pieces): the six
// repeat-statistics distributions RC/RD/RO for kinds D and DI.
inline std::map<std::string, Histogram> repeat_distributions(const std::vector<Score>& corpus) {
    std::map<std::string, Histogram> out;
    for (RepeatKind kind : {RepeatKind::D, RepeatKind::DI}) {
        std::map<int, std::int64_t> rc, rd, ro;
        for (const Score& s : corpus) {
            const RepeatHistograms h = repeat_statistics(s, kind, s.n_bars - 1);
            for (const auto& [k, v] : h.rc) rc[k] += v;
            for (const auto& [k, v] : h.rd) rd[k] += v;
            for (const auto& [k, v] : h.ro) ro[k] += v;
        }
        const std::string suffix = kind == RepeatKind::D ? "D" : "DI";
        out["RC-" + suffix] = histogram_from_counts(rc);
        out["RD-" + suffix] = histogram_from_counts(rd);
        out["RO-" + suffix] = histogram_from_counts(ro);
    }
    return out;
}

}  // namespace mstn
