#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cyseg/eval.hpp"
#include "cyseg/noise.hpp"

namespace cyseg {

struct MatrixRow {
  std::string label;
  NoiseSpec noise;
  // "measured" (validation-set average) for quantization/max-only,
  // "set" (configured target) for Gaussian.
  double snr_db = 0;
  std::string snr_semantics;  // "measured" | "set" | "-"
  double miou = 0;            // fraction in [0,1]
  double psnr_db = 0;
};

// Full-scale reference results for the embedded comparison column
// (full Cityscapes, 200 epochs); desk-scale runs are not expected to
// reproduce them.
struct ReferenceResult {
  const char* noise;
  double snr_db;
  double miou_pct;
  double psnr_db;
};

inline const std::vector<ReferenceResult>& reference_results() {
  static const std::vector<ReferenceResult> rows = {
      {"none", std::nan(""), 39.4, 25.37},
      {"max-only", 0.22, 41.4, 24.71},
      {"quant:4", 21.02, 43.3, 25.54},
      {"quant:3", 14.50, 42.9, 24.48},
      {"quant:2", 7.38, 45.1, 25.30},
      {"quant:1", -0.55, 7.7, 24.38},
  };
  return rows;
}

inline std::string fmt_cell(double v, int prec = 2) {
  if (std::isnan(v)) return "-";
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// Plain-text results table with a reference column filled in where the
// noise spec matches a stored full-scale run.
inline std::string format_matrix_table(const std::vector<MatrixRow>& rows) {
  std::ostringstream os;
  os << "noise        bits  snr_db(sem)      miou_pct  psnr_db   ref_miou_pct  ref_psnr_db\n";
  for (const auto& r : rows) {
    std::string bits = r.noise.kind == NoiseKind::kQuantize ? std::to_string(r.noise.bits) : "-";
    double ref_miou = std::nan(""), ref_psnr = std::nan("");
    for (const auto& ref : reference_results()) {
      if (r.noise.to_string() == ref.noise ||
          (r.noise.kind == NoiseKind::kNone && std::string(ref.noise) == "none")) {
        ref_miou = ref.miou_pct;
        ref_psnr = ref.psnr_db;
        break;
      }
    }
    os << std::left << std::setw(13) << r.label << std::setw(6) << bits << std::setw(9)
       << fmt_cell(r.snr_db) << std::setw(8) << ("(" + r.snr_semantics + ")")
       << std::setw(10) << fmt_cell(100.0 * r.miou) << std::setw(10) << fmt_cell(r.psnr_db)
       << std::setw(14) << fmt_cell(ref_miou) << std::setw(12) << fmt_cell(ref_psnr) << "\n";
  }
  return os.str();
}

inline void write_matrix_csv(const std::vector<MatrixRow>& rows, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_matrix_csv: cannot write " + path);
  f << "label,noise,bits,snr_db,snr_semantics,miou,psnr_db\n";
  for (const auto& r : rows) {
    f << r.label << ',' << r.noise.to_string() << ','
      << (r.noise.kind == NoiseKind::kQuantize ? std::to_string(r.noise.bits) : "-") << ','
      << fmt_db(r.snr_db) << ',' << r.snr_semantics << ',' << fmt_db(r.miou) << ','
      << fmt_db(r.psnr_db) << '\n';
  }
}

// Grouped per-class IoU bars, one group per class and one bar per report,
// rendered as standalone SVG. Undefined IoUs draw as zero-height bars.
inline void write_iou_chart_svg(const std::vector<EvalReport>& reports,
                                const std::string& svg_path) {
  if (reports.empty()) throw std::invalid_argument("write_iou_chart_svg: no reports");
  const int classes = reports[0].class_count;
  for (const auto& r : reports)
    if (r.class_count != classes)
      throw std::invalid_argument("write_iou_chart_svg: class-set mismatch between reports");

  const int n = static_cast<int>(reports.size());
  const double bar_w = 14.0, gap = 10.0, group_w = n * bar_w + gap;
  const double plot_h = 240.0, margin_l = 50.0, margin_b = 40.0, margin_t = 30.0;
  const double width = margin_l + classes * group_w + 20.0;
  const double height = margin_t + plot_h + margin_b + 18.0 * n;
  static const char* kColors[] = {"#4878d0", "#ee854a", "#6acc64", "#d65f5f",
                                  "#956cb4", "#8c613c", "#dc7ec0", "#797979"};

  std::ofstream f(svg_path);
  if (!f) throw std::runtime_error("write_iou_chart_svg: cannot write " + svg_path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
    << height << "\">\n";
  f << "<text x=\"" << margin_l << "\" y=\"18\" font-size=\"13\">Class-wise IoU</text>\n";
  // y axis with 0/0.5/1 grid lines
  for (double tick : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    double y = margin_t + plot_h * (1.0 - tick);
    f << "<line x1=\"" << margin_l << "\" y1=\"" << y << "\" x2=\"" << width - 10
      << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n";
    f << "<text x=\"8\" y=\"" << y + 4 << "\" font-size=\"10\">" << tick << "</text>\n";
  }
  for (int s = 0; s < classes; ++s) {
    double gx = margin_l + s * group_w;
    for (int r = 0; r < n; ++r) {
      double v = reports[r].class_iou[s].value_or(0.0);
      double h = plot_h * v;
      f << "<rect x=\"" << gx + r * bar_w << "\" y=\"" << margin_t + plot_h - h
        << "\" width=\"" << bar_w - 2 << "\" height=\"" << h << "\" fill=\""
        << kColors[r % 8] << "\"/>\n";
    }
    f << "<text x=\"" << gx + n * bar_w / 2.0 << "\" y=\"" << margin_t + plot_h + 16
      << "\" font-size=\"10\" text-anchor=\"middle\">" << s << "</text>\n";
  }
  for (int r = 0; r < n; ++r) {
    double ly = margin_t + plot_h + margin_b + 14.0 * r;
    f << "<rect x=\"" << margin_l << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\""
      << kColors[r % 8] << "\"/>\n";
    f << "<text x=\"" << margin_l + 16 << "\" y=\"" << ly << "\" font-size=\"11\">"
      << (reports[r].label.empty() ? ("report " + std::to_string(r)) : reports[r].label)
      << "</text>\n";
  }
  f << "</svg>\n";
}

// CSV twin of the chart: one row per (class, report) pair.
inline void write_iou_chart_csv(const std::vector<EvalReport>& reports,
                                const std::string& csv_path) {
  if (reports.empty()) throw std::invalid_argument("write_iou_chart_csv: no reports");
  std::ofstream f(csv_path);
  if (!f) throw std::runtime_error("write_iou_chart_csv: cannot write " + csv_path);
  f << "class";
  for (const auto& r : reports) f << ',' << (r.label.empty() ? "report" : r.label);
  f << '\n';
  for (int s = 0; s < reports[0].class_count; ++s) {
    f << s;
    for (const auto& r : reports)
      f << ',' << (r.class_iou[s] ? fmt_db(*r.class_iou[s]) : std::string("undefined"));
    f << '\n';
  }
}

}  // namespace cyseg
