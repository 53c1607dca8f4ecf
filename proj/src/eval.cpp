#include "ifg/eval.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ifg/error.hpp"

namespace ifg {

namespace {

double parse_double(std::string_view tok, std::size_t lineno) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ParseError(lineno, "non-numeric field '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double planar_distance(const Box3D& b) { return std::hypot(b.x, b.y); }

// Greedy matches of one frame for one class: det index -> gt index (or -1),
// for detections of that class only.
struct FrameMatch {
  std::vector<std::size_t> dets;    // detection indices of the class, score-descending
  std::vector<long> matched_gt;     // parallel to dets
  std::size_t num_gt = 0;
};

FrameMatch match_frame(const EvalFrame& frame, ObjectClass cls, double thr) {
  FrameMatch fm;
  std::vector<std::size_t> gts;
  for (std::size_t g = 0; g < frame.gts.size(); ++g) {
    if (frame.gts[g].cls == cls) gts.push_back(g);
  }
  fm.num_gt = gts.size();
  for (std::size_t d = 0; d < frame.detections.size(); ++d) {
    if (frame.detections[d].cls == cls) fm.dets.push_back(d);
  }
  std::stable_sort(fm.dets.begin(), fm.dets.end(), [&](std::size_t a, std::size_t b) {
    return frame.detections[a].score.value_or(0.0) > frame.detections[b].score.value_or(0.0);
  });
  std::vector<char> used(gts.size(), 0);
  for (const auto d : fm.dets) {
    long best = -1;
    double best_iou = -1.0;
    for (std::size_t k = 0; k < gts.size(); ++k) {
      if (used[k]) continue;
      const double iou = iou3d(frame.detections[d].box, frame.gts[gts[k]].box);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<long>(k);
      }
    }
    if (best >= 0 && best_iou >= thr) {
      used[static_cast<std::size_t>(best)] = 1;
      fm.matched_gt.push_back(static_cast<long>(gts[static_cast<std::size_t>(best)]));
    } else {
      fm.matched_gt.push_back(-1);
    }
  }
  return fm;
}

}  // namespace

LabelParseResult parse_labels(std::string_view text) {
  LabelParseResult out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const auto f = split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 15 && f.size() != 16) {
      throw ParseError(lineno, "expected 15 or 16 fields, got " + std::to_string(f.size()));
    }
    std::array<double, 15> v{};
    for (std::size_t i = 1; i < f.size(); ++i) v[i - 1] = parse_double(f[i], lineno);
    const auto cls = class_from_name(f[0]);
    if (!cls) {
      out.diagnostics.push_back("line " + std::to_string(lineno) + ": skipped type '" + std::string(f[0]) + "'");
      continue;
    }
    const double h = v[7], w = v[8], l = v[9];
    if (!(h > 0 && w > 0 && l > 0)) throw ParseError(lineno, "box dimensions must be positive");
    LabeledBox lb;
    lb.box = make_box(v[10], v[11], v[12] + 0.5 * h, l, w, h, v[13]);
    lb.cls = *cls;
    if (f.size() == 16) lb.score = v[14];
    out.objects.push_back(lb);
  }
  return out;
}

std::string serialize_labels(std::span<const LabeledBox> objects) {
  std::string out;
  char buf[512];
  for (const auto& o : objects) {
    const Box3D& b = o.box;
    int n = std::snprintf(buf, sizeof(buf), "%s 0 0 0 0 0 0 0 %.6f %.6f %.6f %.6f %.6f %.6f %.6f",
                          std::string(class_name(o.cls)).c_str(), b.h, b.w, b.l, b.x, b.y, b.z - 0.5 * b.h, b.theta);
    out.append(buf, static_cast<std::size_t>(n));
    if (o.score) {
      n = std::snprintf(buf, sizeof(buf), " %.6f", *o.score);
      out.append(buf, static_cast<std::size_t>(n));
    }
    out.push_back('\n');
  }
  return out;
}

std::vector<LabeledBox> read_label_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_labels(ss.str()).objects;
}

void write_label_file(const std::string& path, std::span<const LabeledBox> objects) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << serialize_labels(objects);
}

std::vector<PrPoint> pr_curve(std::span<const EvalFrame> frames, ObjectClass cls, double iou_threshold) {
  struct Scored {
    double score;
    bool tp;
  };
  std::vector<Scored> all;
  std::size_t total_gt = 0;
  for (const auto& frame : frames) {
    const auto fm = match_frame(frame, cls, iou_threshold);
    total_gt += fm.num_gt;
    for (std::size_t k = 0; k < fm.dets.size(); ++k) {
      all.push_back({frame.detections[fm.dets[k]].score.value_or(0.0), fm.matched_gt[k] >= 0});
    }
  }
  if (total_gt == 0) return {};
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  std::vector<PrPoint> curve;
  curve.reserve(all.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    tp += all[i].tp ? 1 : 0;
    curve.push_back({static_cast<double>(tp) / static_cast<double>(i + 1),
                     static_cast<double>(tp) / static_cast<double>(total_gt)});
  }
  return curve;
}

std::vector<PrPoint> pr_curve(std::span<const LabeledBox> detections, std::span<const LabeledBox> gts,
                              ObjectClass cls, double iou_threshold) {
  const EvalFrame frame{{detections.begin(), detections.end()}, {gts.begin(), gts.end()}};
  return pr_curve(std::span<const EvalFrame>(&frame, 1), cls, iou_threshold);
}

std::string_view recall_mode_name(RecallMode mode) { return mode == RecallMode::kR11 ? "R11" : "R40"; }

double average_precision(std::span<const PrPoint> curve, RecallMode mode) {
  const int positions = mode == RecallMode::kR11 ? 11 : 40;
  double sum = 0.0;
  for (int k = 0; k < positions; ++k) {
    const double r = mode == RecallMode::kR11 ? k / 10.0 : (k + 1) / 40.0;
    double best = 0.0;
    for (const auto& p : curve) {
      if (p.recall >= r) best = std::max(best, p.precision);
    }
    sum += best;
  }
  return sum / positions;
}

void EvalConfig::validate() const {
  for (double t : iou_thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("eval: IoU thresholds must be in (0, 1]");
  }
  if (bucket_edges.size() < 2) throw std::invalid_argument("eval: need at least one distance bucket");
  for (std::size_t i = 0; i + 1 < bucket_edges.size(); ++i) {
    if (!(bucket_edges[i] < bucket_edges[i + 1])) throw std::invalid_argument("eval: bucket edges must increase");
  }
  if (bucket_edges.front() != 0.0 || !std::isinf(bucket_edges.back())) {
    throw std::invalid_argument("eval: buckets must cover [0, inf)");
  }
}

std::string EvalConfig::bucket_name(std::size_t i) const {
  auto fmt = [](double v) {
    if (std::isinf(v)) return std::string("inf");
    std::ostringstream os;
    os << v;
    return os.str();
  };
  return fmt(bucket_edges[i]) + "-" + fmt(bucket_edges[i + 1]);
}

std::size_t EvalConfig::bucket_of(double distance) const {
  for (std::size_t i = 0; i + 1 < bucket_edges.size(); ++i) {
    if (distance >= bucket_edges[i] && distance < bucket_edges[i + 1]) return i;
  }
  return bucket_edges.size() - 2;
}

std::vector<ApRow> evaluate(std::span<const EvalFrame> frames, const EvalConfig& cfg) {
  cfg.validate();
  std::vector<ApRow> rows;
  for (auto cls : kAllClasses) {
    ApRow row{cls, "all", cfg.mode, std::nullopt, 0, 0};
    for (const auto& f : frames) {
      row.num_gt += static_cast<std::size_t>(std::count_if(f.gts.begin(), f.gts.end(), [&](const auto& g) { return g.cls == cls; }));
      row.num_det += static_cast<std::size_t>(
          std::count_if(f.detections.begin(), f.detections.end(), [&](const auto& d) { return d.cls == cls; }));
    }
    if (row.num_gt > 0) {
      row.ap = average_precision(pr_curve(frames, cls, cfg.iou_thresholds[class_index(cls)]), cfg.mode);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ApRow> bucketed_ap(std::span<const EvalFrame> frames, const EvalConfig& cfg) {
  cfg.validate();
  const std::size_t nb = cfg.bucket_edges.size() - 1;
  std::vector<ApRow> rows;
  for (auto cls : kAllClasses) {
    const double thr = cfg.iou_thresholds[class_index(cls)];
    std::vector<std::vector<EvalFrame>> per_bucket(nb, std::vector<EvalFrame>(frames.size()));
    for (std::size_t fi = 0; fi < frames.size(); ++fi) {
      const auto& frame = frames[fi];
      for (const auto& g : frame.gts) {
        if (g.cls == cls) per_bucket[cfg.bucket_of(planar_distance(g.box))][fi].gts.push_back(g);
      }
      const auto fm = match_frame(frame, cls, thr);
      for (std::size_t k = 0; k < fm.dets.size(); ++k) {
        const auto& det = frame.detections[fm.dets[k]];
        const Box3D& anchor_box = fm.matched_gt[k] >= 0 ? frame.gts[static_cast<std::size_t>(fm.matched_gt[k])].box : det.box;
        per_bucket[cfg.bucket_of(planar_distance(anchor_box))][fi].detections.push_back(det);
      }
    }
    for (std::size_t b = 0; b < nb; ++b) {
      ApRow row{cls, cfg.bucket_name(b), cfg.mode, std::nullopt, 0, 0};
      for (const auto& f : per_bucket[b]) {
        row.num_gt += f.gts.size();
        row.num_det += f.detections.size();
      }
      if (row.num_gt > 0) row.ap = average_precision(pr_curve(per_bucket[b], cls, thr), cfg.mode);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string ap_rows_csv(std::span<const ApRow> rows) {
  std::ostringstream os;
  os << "class,bucket,mode,ap\n";
  char buf[64];
  for (const auto& r : rows) {
    os << class_name(r.cls) << ',' << r.bucket << ',' << recall_mode_name(r.mode) << ',';
    if (r.ap) {
      std::snprintf(buf, sizeof(buf), "%.6f", *r.ap);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::optional<double> mean_ap(std::span<const ApRow> rows) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.ap) {
      sum += *r.ap;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace ifg
