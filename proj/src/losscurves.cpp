#include "annoclean/losscurves.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "annoclean/error.hpp"

namespace annoclean {

namespace {

double tail_average(const LossCurve& curve, std::size_t window) {
  const std::size_t n = curve.steps.size();
  const std::size_t w = std::min(window, n);
  double sum = 0.0;
  for (std::size_t i = n - w; i < n; ++i) {
    sum += curve.steps[i].loss;
  }
  return w == 0 ? 0.0 : sum / static_cast<double>(w);
}

std::vector<double> smooth(const LossCurve& curve, std::size_t window) {
  std::vector<double> out;
  out.reserve(curve.steps.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < curve.steps.size(); ++i) {
    sum += curve.steps[i].loss;
    if (i >= window) {
      sum -= curve.steps[i - window].loss;
    }
    out.push_back(sum / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

const cv::Scalar kPalette[] = {{200, 60, 30},  {30, 120, 230}, {40, 160, 40},  {160, 40, 160},
                               {20, 20, 200},  {120, 120, 0},  {0, 140, 200},  {90, 90, 90}};

void draw_panel(cv::Mat& canvas, cv::Rect area, const std::string& title,
                const std::vector<const NamedCurve*>& curves, std::size_t smoothing) {
  const cv::Scalar black(0, 0, 0);
  const cv::Scalar grid(220, 220, 220);
  cv::putText(canvas, title, {area.x + 10, area.y + 24}, cv::FONT_HERSHEY_SIMPLEX, 0.6, black, 1,
              cv::LINE_AA);
  const cv::Rect plot(area.x + 70, area.y + 40, area.width - 90, area.height - 90);
  cv::rectangle(canvas, plot, black, 1);
  if (curves.empty()) {
    cv::putText(canvas, "no runs", {plot.x + plot.width / 2 - 30, plot.y + plot.height / 2},
                cv::FONT_HERSHEY_SIMPLEX, 0.5, black, 1, cv::LINE_AA);
    return;
  }

  std::vector<std::vector<double>> series;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t max_len = 1;
  for (const NamedCurve* c : curves) {
    series.push_back(smooth(c->curve, smoothing));
    for (double v : series.back()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    max_len = std::max(max_len, series.back().size());
  }
  if (!(hi > lo)) {
    hi = lo + 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  auto to_px = [&](std::size_t i, double v) {
    const double x = plot.x + plot.width * static_cast<double>(i) /
                                  static_cast<double>(std::max<std::size_t>(max_len - 1, 1));
    const double y = plot.y + plot.height * (1.0 - (v - lo) / (hi - lo));
    return cv::Point(static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)));
  };

  char label[64];
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    const cv::Point p = to_px(0, v);
    cv::line(canvas, {plot.x + 1, p.y}, {plot.x + plot.width - 1, p.y}, grid, 1);
    std::snprintf(label, sizeof(label), "%.3g", v);
    cv::putText(canvas, label, {area.x + 8, p.y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1,
                cv::LINE_AA);
  }
  for (int t = 0; t <= 4; ++t) {
    const std::size_t i = (max_len - 1) * t / 4;
    const cv::Point p = to_px(i, lo);
    std::snprintf(label, sizeof(label), "%zu", i);
    cv::putText(canvas, label, {p.x - 10, plot.y + plot.height + 18}, cv::FONT_HERSHEY_SIMPLEX,
                0.4, black, 1, cv::LINE_AA);
  }
  cv::putText(canvas, "step", {plot.x + plot.width / 2 - 15, plot.y + plot.height + 38},
              cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1, cv::LINE_AA);

  for (std::size_t k = 0; k < series.size(); ++k) {
    const cv::Scalar color = kPalette[k % std::size(kPalette)];
    std::vector<cv::Point> pts;
    pts.reserve(series[k].size());
    for (std::size_t i = 0; i < series[k].size(); ++i) {
      pts.push_back(to_px(i, series[k][i]));
    }
    cv::polylines(canvas, pts, false, color, 1, cv::LINE_AA);
    const int ly = plot.y + 16 + 18 * static_cast<int>(k);
    cv::line(canvas, {plot.x + plot.width - 170, ly - 4}, {plot.x + plot.width - 150, ly - 4},
             color, 2);
    cv::putText(canvas, curves[k]->label, {plot.x + plot.width - 145, ly},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1, cv::LINE_AA);
  }
}

}  // namespace

std::vector<ConvergenceRow> summarize_convergence(std::span<const NamedCurve> curves,
                                                  std::size_t window, double rel_eps) {
  std::vector<ConvergenceRow> rows;
  for (const auto& c : curves) {
    ConvergenceRow row;
    row.label = c.label;
    row.loss = c.loss.name();
    row.mse_family = c.loss.has_mse();
    row.steps = c.curve.steps.size();
    row.convergence = convergence_step(c.curve, window, rel_eps);
    row.final_average = tail_average(c.curve, window);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_convergence_table(std::span<const ConvergenceRow> rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-32s %-28s %-6s %8s %12s %12s %s\n", "run", "loss", "family",
                "steps", "converged_at", "final_loss", "note");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-32s %-28s %-6s %8zu %12lld %12.6g %s\n", r.label.c_str(),
                  r.loss.c_str(), r.mse_family ? "mse" : "l1", r.steps,
                  static_cast<long long>(r.convergence.step), r.final_average,
                  r.convergence.degenerate ? "degenerate" : "");
    out += line;
  }
  return out;
}

void write_convergence_csv(std::span<const ConvergenceRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write convergence summary: " + path.string());
  }
  out.precision(17);
  out << "run,loss,family,steps,convergence_step,final_loss,degenerate\n";
  for (const auto& r : rows) {
    out << r.label << ',' << r.loss << ',' << (r.mse_family ? "mse" : "l1") << ',' << r.steps << ','
        << r.convergence.step << ',' << r.final_average << ',' << (r.convergence.degenerate ? 1 : 0)
        << '\n';
  }
}

void plot_loss_curves(std::span<const NamedCurve> curves, const std::filesystem::path& path,
                      std::size_t smoothing) {
  constexpr int kPanelWidth = 640;
  constexpr int kHeight = 440;
  cv::Mat canvas(kHeight, 2 * kPanelWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  std::vector<const NamedCurve*> l1_family;
  std::vector<const NamedCurve*> mse_family;
  for (const auto& c : curves) {
    (c.loss.has_mse() ? mse_family : l1_family).push_back(&c);
  }
  const std::size_t window = std::max<std::size_t>(smoothing, 1);
  draw_panel(canvas, {0, 0, kPanelWidth, kHeight}, "(a) L1-family losses", l1_family, window);
  draw_panel(canvas, {kPanelWidth, 0, kPanelWidth, kHeight}, "(b) MSE-bearing losses", mse_family,
             window);
  if (!cv::imwrite(path.string(), canvas)) {
    throw Error("cannot write plot: " + path.string());
  }
}

}  // namespace annoclean
