#include "mia/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>

namespace mia {

namespace {

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

void add_unique(std::vector<std::string>& list, const std::string& s) {
  if (std::find(list.begin(), list.end(), s) == list.end()) list.push_back(s);
}

const char* attack_color(const std::string& attack) {
  if (attack == "score") return "#1b9e77";
  if (attack == "learned") return "#d95f02";
  if (attack == "knn") return "#7570b3";
  return "#666666";
}

}  // namespace

std::string diverging_color(double v, double limit) {
  const double t = limit > 0.0 ? std::clamp(v / limit, -1.0, 1.0) : 0.0;
  // white at 0, #b2182b at +1, #2166ac at -1
  const double r1 = t >= 0 ? 0xb2 : 0x21, g1 = t >= 0 ? 0x18 : 0x66, b1 = t >= 0 ? 0x2b : 0xac;
  const double a = std::abs(t);
  auto mix = [&](double end) { return static_cast<int>(std::lround(255.0 + (end - 255.0) * a)); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", mix(r1), mix(g1), mix(b1));
  return buf;
}

std::string delta_heatmap_svg(const AuditReport& report) {
  std::vector<std::string> datasets, families;
  std::map<std::pair<std::string, std::string>, double> values;
  for (const DeltaCell& d : report.delta_auc) {
    add_unique(datasets, d.dataset);
    add_unique(families, d.family);
    values[{d.dataset, d.family}] = d.value;
  }
  for (const ReportCell& c : report.cells) {
    add_unique(datasets, c.dataset);
    add_unique(families, c.family);
  }
  double limit = 0.0;
  for (const auto& [key, v] : values) limit = std::max(limit, std::abs(v));

  constexpr int kCell = 80, kLeft = 120, kTop = 60;
  const int width = kLeft + kCell * static_cast<int>(families.size()) + 20;
  const int height = kTop + kCell * static_cast<int>(datasets.size()) + 40;
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "  <title>Delta AUC (learned - score)</title>\n";
  svg << "  <text x=\"" << kLeft << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
      << "Delta AUC (learned - score), scale +/-" << fmt("%.3f", limit) << "</text>\n";
  for (std::size_t j = 0; j < families.size(); ++j) {
    svg << "  <text class=\"col-label\" x=\"" << kLeft + kCell * static_cast<int>(j) + kCell / 2 << "\" y=\""
        << kTop - 8 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << escape(families[j])
        << "</text>\n";
  }
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const int y = kTop + kCell * static_cast<int>(i);
    svg << "  <text class=\"row-label\" x=\"" << kLeft - 8 << "\" y=\"" << y + kCell / 2
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << escape(datasets[i])
        << "</text>\n";
    for (std::size_t j = 0; j < families.size(); ++j) {
      const int x = kLeft + kCell * static_cast<int>(j);
      const auto it = values.find({datasets[i], families[j]});
      const std::string fill = it == values.end() ? "#dddddd" : diverging_color(it->second, limit);
      const std::string label = it == values.end() ? "n/a" : fmt("%+.3f", it->second);
      svg << "  <rect class=\"cell\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCell << "\" height=\""
          << kCell << "\" fill=\"" << fill << "\" stroke=\"#ffffff\" data-dataset=\"" << escape(datasets[i])
          << "\" data-family=\"" << escape(families[j]) << "\"";
      if (it != values.end()) svg << " data-value=\"" << fmt("%.17g", it->second) << "\"";
      svg << "/>\n";
      svg << "  <text class=\"cell-label\" x=\"" << x + kCell / 2 << "\" y=\"" << y + kCell / 2 + 4
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << label << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string auc_scatter_svg(const AuditReport& report) {
  std::vector<std::string> groups;
  for (const ReportCell& c : report.cells) add_unique(groups, c.dataset + "/" + c.family);

  constexpr int kLeft = 60, kTop = 30, kPlotH = 300, kStep = 70;
  const int plot_w = kStep * static_cast<int>(std::max<std::size_t>(groups.size(), 1));
  const int width = kLeft + plot_w + 140;
  const int height = kTop + kPlotH + 110;
  auto y_of = [&](double auc) { return kTop + kPlotH * (1.0 - std::clamp(auc, 0.0, 1.0)); };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "  <title>AUC per cell</title>\n";
  svg << "  <rect class=\"frame\" x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w << "\" height=\""
      << kPlotH << "\" fill=\"none\" stroke=\"#000000\"/>\n";
  for (double tick : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    svg << "  <text class=\"tick\" x=\"" << kLeft - 6 << "\" y=\"" << fmt("%.2f", y_of(tick) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt("%.2f", tick) << "</text>\n";
  }
  svg << "  <line class=\"chance\" x1=\"" << kLeft << "\" y1=\"" << fmt("%.2f", y_of(0.5)) << "\" x2=\""
      << kLeft + plot_w << "\" y2=\"" << fmt("%.2f", y_of(0.5))
      << "\" stroke=\"#555555\" stroke-dasharray=\"6 4\"/>\n";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const int x = kLeft + kStep * static_cast<int>(g) + kStep / 2;
    svg << "  <text class=\"group-label\" x=\"" << x << "\" y=\"" << kTop + kPlotH + 14
        << "\" text-anchor=\"end\" transform=\"rotate(-40 " << x << ' ' << kTop + kPlotH + 14
        << ")\" font-family=\"sans-serif\" font-size=\"10\">" << escape(groups[g]) << "</text>\n";
  }
  for (const ReportCell& c : report.cells) {
    const auto g = std::find(groups.begin(), groups.end(), c.dataset + "/" + c.family) - groups.begin();
    const int x = kLeft + kStep * static_cast<int>(g) + kStep / 2;
    svg << "  <circle class=\"point\" cx=\"" << x << "\" cy=\"" << fmt("%.2f", y_of(c.auc))
        << "\" r=\"5\" fill=\"" << attack_color(c.attack) << "\" data-attack=\"" << escape(c.attack)
        << "\" data-auc=\"" << fmt("%.17g", c.auc) << "\"/>\n";
  }
  int ly = kTop;
  for (const char* attack : {"score", "learned", "knn"}) {
    svg << "  <circle cx=\"" << kLeft + plot_w + 20 << "\" cy=\"" << ly << "\" r=\"5\" fill=\""
        << attack_color(attack) << "\"/>\n";
    svg << "  <text x=\"" << kLeft + plot_w + 30 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << attack << "</text>\n";
    ly += 18;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace mia
