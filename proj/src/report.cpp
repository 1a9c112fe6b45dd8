#include "skyloc/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace skyloc {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::vector<std::string> split(const std::string &line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string &s, const std::filesystem::path &path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception &) {
    throw std::runtime_error(path.string() + ": bad number '" + s + "'");
  }
}

std::ofstream open_out(const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

int plot_n_of(const MetricsTable &table) {
  if (table.rows.empty()) return 0;
  if (table.row_for(3)) return 3;
  int n = table.rows.front().n;
  for (const auto &r : table.rows) n = std::min(n, r.n);
  return n;
}

/// Maps a rectangle of world coordinates into an SVG viewport, y up.
struct PlotFrame {
  double x0, y0, x1, y1;
  double width = 800, height = 600, margin = 50;

  double scale() const {
    return std::min((width - 2 * margin) / std::max(x1 - x0, 1e-9), (height - 2 * margin) / std::max(y1 - y0, 1e-9));
  }
  double sx(double x) const { return margin + (x - x0) * scale(); }
  double sy(double y) const { return height - margin - (y - y0) * scale(); }
};

struct AxisFrame {
  double x0, x1, y0, y1;
  double width = 800, height = 400, margin = 50;
  double sx(double x) const { return margin + (x - x0) / std::max(x1 - x0, 1e-9) * (width - 2 * margin); }
  double sy(double y) const { return height - margin - (y - y0) / std::max(y1 - y0, 1e-9) * (height - 2 * margin); }
};

void write_trajectory_svg(const std::vector<const QueryRecord *> &records, int n, const std::filesystem::path &path) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
  auto grow = [&](const LocalPoint &p) {
    x0 = std::min(x0, p.x()), x1 = std::max(x1, p.x());
    y0 = std::min(y0, p.y()), y1 = std::max(y1, p.y());
  };
  for (const auto *r : records) {
    grow(r->truth);
    if (r->localized) grow(r->estimate), grow(r->candidate);
  }
  if (records.empty()) x0 = y0 = 0, x1 = y1 = 1;
  PlotFrame f{x0 - 5, y0 - 5, x1 + 5, y1 + 5};

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
      << "\" viewBox=\"0 0 " << f.width << ' ' << f.height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"10\" y=\"20\" font-size=\"14\">Trajectory (top view, n = " << n << ")</text>\n";
  out << "<polyline class=\"ground-truth\" fill=\"none\" stroke=\"blue\" stroke-width=\"2\" points=\"";
  for (const auto *r : records) out << fmt_short(f.sx(r->truth.x())) << ',' << fmt_short(f.sy(r->truth.y())) << ' ';
  out << "\"/>\n";
  for (const auto *r : records) {
    if (!r->localized) continue;
    const double cx = f.sx(r->candidate.x()), cy = f.sy(r->candidate.y());
    const double ex = f.sx(r->estimate.x()), ey = f.sy(r->estimate.y());
    out << "<line class=\"correspondence\" stroke=\"orange\" x1=\"" << fmt_short(cx) << "\" y1=\"" << fmt_short(cy)
        << "\" x2=\"" << fmt_short(ex) << "\" y2=\"" << fmt_short(ey) << "\"/>\n";
    out << "<path class=\"initial-match\" stroke=\"red\" d=\"M" << fmt_short(cx - 4) << ' ' << fmt_short(cy - 4) << " L"
        << fmt_short(cx + 4) << ' ' << fmt_short(cy + 4) << " M" << fmt_short(cx - 4) << ' ' << fmt_short(cy + 4)
        << " L" << fmt_short(cx + 4) << ' ' << fmt_short(cy - 4) << "\"/>\n";
    out << "<circle class=\"refined\" fill=\"yellow\" stroke=\"black\" r=\"4\" cx=\"" << fmt_short(ex) << "\" cy=\""
        << fmt_short(ey) << "\"/>\n";
  }
  out << "<g font-size=\"12\">\n"
      << "<line x1=\"600\" y1=\"20\" x2=\"620\" y2=\"20\" stroke=\"blue\" stroke-width=\"2\"/>"
      << "<text x=\"625\" y=\"24\">ground truth</text>\n"
      << "<text x=\"605\" y=\"42\" fill=\"red\">x</text><text x=\"625\" y=\"42\">initial match</text>\n"
      << "<circle cx=\"610\" cy=\"56\" r=\"4\" fill=\"yellow\" stroke=\"black\"/>"
      << "<text x=\"625\" y=\"60\">refined</text>\n"
      << "<line x1=\"600\" y1=\"74\" x2=\"620\" y2=\"74\" stroke=\"orange\"/>"
      << "<text x=\"625\" y=\"78\">match to refined</text>\n</g>\n</svg>\n";
}

void write_altitude_svg(const std::vector<const QueryRecord *> &records, int n, const std::filesystem::path &path) {
  double d1 = 1e-9, z0 = std::numeric_limits<double>::infinity(), z1 = -z0;
  for (const auto *r : records) {
    d1 = std::max(d1, r->distance);
    z0 = std::min(z0, r->truth.z()), z1 = std::max(z1, r->truth.z());
    if (r->localized) z0 = std::min(z0, r->estimate.z()), z1 = std::max(z1, r->estimate.z());
  }
  if (records.empty()) z0 = 0, z1 = 1;
  AxisFrame f{0.0, d1, z0 - 5, z1 + 5};

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
      << "\" viewBox=\"0 0 " << f.width << ' ' << f.height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"10\" y=\"20\" font-size=\"14\">Altitude vs distance (n = " << n << ")</text>\n"
      << "<text x=\"" << f.width / 2 << "\" y=\"" << f.height - 10 << "\" font-size=\"12\">distance [m] (0 to "
      << fmt_short(d1) << ")</text>\n"
      << "<text x=\"5\" y=\"" << f.height / 2 << "\" font-size=\"12\">z [m] (" << fmt_short(f.y0) << " to "
      << fmt_short(f.y1) << ")</text>\n";
  out << "<polyline class=\"ground-truth-altitude\" fill=\"none\" stroke=\"blue\" stroke-width=\"2\" points=\"";
  for (const auto *r : records) out << fmt_short(f.sx(r->distance)) << ',' << fmt_short(f.sy(r->truth.z())) << ' ';
  out << "\"/>\n";
  for (const auto *r : records)
    if (r->localized)
      out << "<circle class=\"inferred-altitude\" fill=\"red\" r=\"3\" cx=\"" << fmt_short(f.sx(r->distance))
          << "\" cy=\"" << fmt_short(f.sy(r->estimate.z())) << "\"/>\n";
  out << "</svg>\n";
}

}  // namespace

void export_report(const MetricsTable &table, const std::filesystem::path &out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    auto out = open_out(out_dir / "metrics.csv");
    out << "n,rmse3d_m,rmse2d_m,recall_pct\n";
    for (const auto &r : table.rows)
      out << r.n << ',' << (r.rmse_3d ? fmt(*r.rmse_3d) : "") << ',' << (r.rmse_2d ? fmt(*r.rmse_2d) : "") << ','
          << fmt(r.recall) << '\n';
  }
  {
    auto out = open_out(out_dir / "queries.csv");
    out << "n,query,time_s,distance_m,true_x,true_y,true_z,status,localized,est_x,est_y,est_z,cand_x,cand_y,cand_z,"
           "candidate_id,inliers,err3d_m,err2d_m\n";
    for (const auto &q : table.log) {
      out << q.n << ',' << q.query << ',' << fmt(q.time) << ',' << fmt(q.distance) << ',' << fmt(q.truth.x()) << ','
          << fmt(q.truth.y()) << ',' << fmt(q.truth.z()) << ',' << q.status << ',' << (q.localized ? 1 : 0);
      if (q.localized) {
        out << ',' << fmt(q.estimate.x()) << ',' << fmt(q.estimate.y()) << ',' << fmt(q.estimate.z()) << ','
            << fmt(q.candidate.x()) << ',' << fmt(q.candidate.y()) << ',' << fmt(q.candidate.z()) << ','
            << q.candidate_id << ',' << q.inliers << ',' << fmt(q.error_3d) << ',' << fmt(q.error_2d) << '\n';
      } else {
        out << ",,,,,,,,,,\n";
      }
    }
  }
  const int n = plot_n_of(table);
  std::vector<const QueryRecord *> records;
  for (const auto &q : table.log)
    if (q.n == n) records.push_back(&q);
  std::sort(records.begin(), records.end(), [](auto *a, auto *b) { return a->query < b->query; });
  write_trajectory_svg(records, n, out_dir / "trajectory.svg");
  write_altitude_svg(records, n, out_dir / "altitude.svg");
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "n,rmse3d_m,rmse2d_m,recall_pct") throw std::runtime_error(path.string() + ": unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 4) throw std::runtime_error(path.string() + ": expected 4 fields");
    MetricsRow r;
    r.n = static_cast<int>(parse_double(f[0], path));
    if (!f[1].empty()) r.rmse_3d = parse_double(f[1], path);
    if (!f[2].empty()) r.rmse_2d = parse_double(f[2], path);
    r.recall = parse_double(f[3], path);
    rows.push_back(r);
  }
  return rows;
}

std::vector<QueryRecord> read_queries_csv(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<QueryRecord> log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 19) throw std::runtime_error(path.string() + ": expected 19 fields");
    QueryRecord q;
    q.n = static_cast<int>(parse_double(f[0], path));
    q.query = static_cast<int>(parse_double(f[1], path));
    q.time = parse_double(f[2], path);
    q.distance = parse_double(f[3], path);
    q.truth = {parse_double(f[4], path), parse_double(f[5], path), parse_double(f[6], path)};
    q.status = f[7];
    q.localized = f[8] == "1";
    if (q.localized) {
      q.estimate = {parse_double(f[9], path), parse_double(f[10], path), parse_double(f[11], path)};
      q.candidate = {parse_double(f[12], path), parse_double(f[13], path), parse_double(f[14], path)};
      q.candidate_id = static_cast<long>(parse_double(f[15], path));
      q.inliers = static_cast<int>(parse_double(f[16], path));
      q.error_3d = parse_double(f[17], path);
      q.error_2d = parse_double(f[18], path);
    }
    log.push_back(q);
  }
  return log;
}

}  // namespace skyloc
