#include "cinch/telemetry/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace cinch::telemetry {
namespace {

using K = grasp::GraspPhase::Kind;

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& text, std::size_t line) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw AnalysisError("line " + std::to_string(line) + ": not a number '" + text + "'");
  }
  return v;
}

bool gripping(const grasp::GraspPhase& p) {
  return p.is(K::Enclosing) || p.is(K::Secured) || p.is(K::Detaching);
}

std::optional<double> field_value(const TelemetrySample& s, const std::string& field) {
  if (field == "time") return s.time;
  if (field == "closer.current_ma") return s.closer.current_ma;
  if (field == "closer.velocity_rpm") return s.closer.velocity_rpm;
  if (field == "closer.position_rev") return s.closer.position_rev;
  if (field == "opener.current_ma") return s.opener.current_ma;
  if (field == "opener.velocity_rpm") return s.opener.velocity_rpm;
  if (field == "opener.position_rev") return s.opener.position_rev;
  if (field == "contact_force") return s.contact_force;
  if (field == "pull_force") return s.pull_force;
  throw UnknownField("unknown field '" + field + "'");
}

}  // namespace

ThresholdStudy compute_threshold(std::vector<BurstSample> samples) {
  if (samples.empty()) throw EmptyStudy("threshold study needs at least one sample");
  ThresholdStudy study;
  const auto n = static_cast<double>(samples.size());
  double sum = 0.0;
  study.min = study.max = samples.front().burst_force;
  for (const auto& s : samples) {
    if (!std::isfinite(s.burst_force)) throw AnalysisError("non-finite burst force for " + s.fruit_id);
    sum += s.burst_force;
    study.min = std::min(study.min, s.burst_force);
    study.max = std::max(study.max, s.burst_force);
  }
  study.threshold = sum / n;
  if (samples.size() > 1) {
    double ss = 0.0;
    for (const auto& s : samples) ss += (s.burst_force - study.threshold) * (s.burst_force - study.threshold);
    study.stddev = std::sqrt(ss / (n - 1.0));
  }
  study.samples = std::move(samples);
  return study;
}

MarginReport margin_report(const std::vector<HarvestLog>& logs, double threshold) {
  MarginReport report;
  report.threshold = threshold;
  report.min_margin = std::numeric_limits<double>::infinity();
  for (const auto& log : logs) {
    const bool detached = std::any_of(log.samples.begin(), log.samples.end(),
                                      [](const TelemetrySample& s) { return s.phase.is(K::Detaching); });
    if (!detached) throw NoDetachPhase("log '" + log.id + "' has no Detaching samples");

    std::optional<double> peak;
    double t0 = std::numeric_limits<double>::infinity();
    double t1 = -t0;
    for (const auto& s : log.samples) {
      if (!gripping(s.phase)) continue;
      t0 = std::min(t0, s.time);
      t1 = std::max(t1, s.time);
      if (s.contact_force) peak = std::max(peak.value_or(0.0), *s.contact_force);
    }
    // Hardware logs carry no force channel; use the sensor readings that
    // fall inside the gripping window instead.
    for (const auto& r : log.external_force) {
      if (r.time >= t0 && r.time <= t1) peak = std::max(peak.value_or(0.0), r.force);
    }
    if (!peak) throw AnalysisError("log '" + log.id + "' has no force data");

    MarginRow row{log.id, *peak, threshold - *peak, false};
    row.violation = row.margin <= 0.0;
    report.violations += row.violation ? 1 : 0;
    report.min_margin = std::min(report.min_margin, row.margin);
    report.rows.push_back(std::move(row));
  }
  if (report.rows.empty()) report.min_margin = 0.0;
  return report;
}

std::vector<ForceReading> parse_force_csv(std::istream& in) {
  std::vector<ForceReading> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < 2) throw AnalysisError("line " + std::to_string(n) + ": expected time,force");
    if (n == 1 && !cells[0].empty() && !std::isdigit(static_cast<unsigned char>(cells[0][0])) &&
        cells[0][0] != '-' && cells[0][0] != '.') {
      continue;  // header
    }
    out.push_back({parse_double(cells[0], n), parse_double(cells[1], n)});
  }
  return out;
}

std::vector<BurstSample> parse_burst_csv(std::istream& in) {
  std::vector<BurstSample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() == 1) cells.insert(cells.begin(), std::to_string(out.size() + 1));
    if (cells.size() < 2) throw AnalysisError("line " + std::to_string(n) + ": expected fruit_id,burst_force");
    const char c = cells[1].empty() ? ' ' : cells[1][0];
    if (n == 1 && !std::isdigit(static_cast<unsigned char>(c)) && c != '.') continue;  // header
    out.push_back({cells[0], parse_double(cells[1], n)});
  }
  return out;
}

std::string format_percent(long long k, long long n) {
  if (n <= 0) throw std::invalid_argument("percentage of an empty set");
  if (k < 0 || k > n) throw std::invalid_argument("count outside [0, n]");
  // Tenths of a percent: 1000 k / n, ties to even.
  long long q = (1000 * k) / n;
  const long long r = (1000 * k) % n;
  if (2 * r > n || (2 * r == n && q % 2 == 1)) ++q;
  return std::to_string(q / 10) + "." + std::to_string(q % 10);
}

std::vector<RateRow> rate_table(const std::vector<HarvestRecord>& records) {
  std::map<FruitClass, RateRow> by_class;
  for (const auto& r : records) {
    RateRow& row = by_class[r.fruit_class];
    row.fruit_class = r.fruit_class;
    ++row.n;
    if (r.damaged_on_harvest) ++row.damaged;
    if (r.bruised_day5) {
      ++row.inspected;
      if (*r.bruised_day5) ++row.bruised;
    }
  }
  std::vector<RateRow> rows;
  for (auto& [cls, row] : by_class) {
    row.damage_rate = format_percent(row.damaged, row.n);
    if (row.inspected > 0) row.bruise_rate = format_percent(row.bruised, row.inspected);
    rows.push_back(row);
  }
  return rows;
}

std::string render_rate_table(const std::vector<RateRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "class" << std::right << std::setw(5) << "n" << std::setw(10) << "damaged"
     << std::setw(10) << "damage%" << std::setw(11) << "inspected" << std::setw(9) << "bruised" << std::setw(9)
     << "bruise%" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(8) << to_string(r.fruit_class) << std::right << std::setw(5) << r.n << std::setw(10)
       << r.damaged << std::setw(10) << r.damage_rate << std::setw(11) << r.inspected << std::setw(9) << r.bruised
       << std::setw(9) << r.bruise_rate.value_or("-") << '\n';
  }
  return os.str();
}

std::string render_margin_report(const MarginReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "threshold " << report.threshold << " N\n";
  for (const auto& r : report.rows) {
    os << "  " << std::left << std::setw(24) << r.id << std::right << " peak " << std::setw(8) << r.peak_force
       << " N  margin " << std::setw(8) << r.margin << " N" << (r.violation ? "  VIOLATION" : "") << '\n';
  }
  os << "min margin " << report.min_margin << " N, violations " << report.violations << '\n';
  return os.str();
}

const std::vector<std::string>& series_fields() {
  static const std::vector<std::string> fields{
      "time",          "closer.current_ma",   "closer.velocity_rpm", "closer.position_rev", "opener.current_ma",
      "opener.velocity_rpm", "opener.position_rev", "contact_force",  "pull_force"};
  return fields;
}

SeriesTable select_series(const std::vector<TelemetrySample>& log, const std::vector<std::string>& fields) {
  for (const auto& f : fields) {
    if (std::find(series_fields().begin(), series_fields().end(), f) == series_fields().end()) {
      throw UnknownField("unknown field '" + f + "'");
    }
  }
  if (log.empty()) throw EmptyLog("log has no samples");
  SeriesTable table;
  table.fields.push_back("time");
  for (const auto& f : fields) {
    if (f != "time") table.fields.push_back(f);
  }
  table.rows.reserve(log.size());
  for (const auto& s : log) {
    std::vector<std::optional<double>> row;
    row.reserve(table.fields.size());
    for (const auto& f : table.fields) row.push_back(field_value(s, f));
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string to_csv(const SeriesTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.fields.size(); ++i) {
    if (i) out += ',';
    out += table.fields[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      if (row[i]) out += shortest(*row[i]);
    }
    out += '\n';
  }
  return out;
}

SeriesTable parse_csv(std::istream& in) {
  SeriesTable table;
  std::string line;
  if (!std::getline(in, line)) throw EmptyLog("CSV has no header");
  table.fields = split_csv_line(line);
  for (const auto& f : table.fields) {
    if (std::find(series_fields().begin(), series_fields().end(), f) == series_fields().end()) {
      throw UnknownField("unknown field '" + f + "'");
    }
  }
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != table.fields.size()) {
      throw AnalysisError("line " + std::to_string(n) + ": expected " + std::to_string(table.fields.size()) +
                          " cells, got " + std::to_string(cells.size()));
    }
    std::vector<std::optional<double>> row;
    for (const auto& c : cells) row.push_back(c.empty() ? std::nullopt : std::optional(parse_double(c, n)));
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

struct Panel {
  double top;
  double height;
  double lo;
  double hi;
};

constexpr double kWidth = 800.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;

std::string polyline(const std::vector<TelemetrySample>& log, const Panel& p, double t0, double t1,
                     double (*get)(const TelemetrySample&), const char* colour) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << "<polyline fill=\"none\" stroke=\"" << colour
     << "\" stroke-width=\"1.5\" points=\"";
  const double span_t = t1 > t0 ? t1 - t0 : 1.0;
  const double span_y = p.hi > p.lo ? p.hi - p.lo : 1.0;
  for (const auto& s : log) {
    const double x = kLeft + (s.time - t0) / span_t * (kWidth - kLeft - kRight);
    const double y = p.top + p.height - (get(s) - p.lo) / span_y * p.height;
    os << x << ',' << y << ' ';
  }
  os << "\"/>\n";
  return os.str();
}

std::string axes(const Panel& p, const char* label) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "<rect x=\"" << kLeft << "\" y=\"" << p.top << "\" width=\"" << kWidth - kLeft - kRight << "\" height=\""
     << p.height << "\" fill=\"none\" stroke=\"#444\"/>\n";
  os << "<text x=\"" << kLeft - 8 << "\" y=\"" << p.top + 12 << "\" text-anchor=\"end\" font-size=\"11\">" << p.hi
     << "</text>\n";
  os << "<text x=\"" << kLeft - 8 << "\" y=\"" << p.top + p.height << "\" text-anchor=\"end\" font-size=\"11\">"
     << p.lo << "</text>\n";
  os << "<text x=\"12\" y=\"" << p.top + p.height / 2 << "\" font-size=\"12\" transform=\"rotate(-90 12 "
     << p.top + p.height / 2 << ")\" text-anchor=\"middle\">" << label << "</text>\n";
  return os.str();
}

}  // namespace

std::string render_svg(const std::vector<TelemetrySample>& log, double reference_current_ma) {
  if (log.empty()) throw EmptyLog("log has no samples");
  const double t0 = log.front().time;
  const double t1 = log.back().time;

  double i_lo = 0.0, i_hi = reference_current_ma, v_lo = 0.0, v_hi = 0.0;
  for (const auto& s : log) {
    i_lo = std::min({i_lo, s.closer.current_ma, s.opener.current_ma});
    i_hi = std::max({i_hi, s.closer.current_ma, s.opener.current_ma});
    v_lo = std::min({v_lo, s.closer.velocity_rpm, s.opener.velocity_rpm});
    v_hi = std::max({v_hi, s.closer.velocity_rpm, s.opener.velocity_rpm});
  }
  i_hi *= 1.1;
  v_hi = v_hi > 0.0 ? v_hi * 1.1 : 1.0;
  const Panel current{20.0, 220.0, i_lo, i_hi};
  const Panel velocity{280.0, 220.0, v_lo, v_hi};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"540\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << axes(current, "current (mA)") << axes(velocity, "velocity (rpm)");

  const double y_ref =
      current.top + current.height - (reference_current_ma - current.lo) / (current.hi - current.lo) * current.height;
  os << std::fixed << std::setprecision(2) << "<line x1=\"" << kLeft << "\" x2=\"" << kWidth - kRight << "\" y1=\""
     << y_ref << "\" y2=\"" << y_ref << "\" stroke=\"#c00\" stroke-dasharray=\"6 4\"/>\n";
  os << "<text x=\"" << kWidth - kRight - 4 << "\" y=\"" << y_ref - 4
     << "\" text-anchor=\"end\" font-size=\"11\" fill=\"#c00\">reference " << reference_current_ma << " mA</text>\n";

  os << polyline(log, current, t0, t1, [](const TelemetrySample& s) { return s.closer.current_ma; }, "#1f77b4");
  os << polyline(log, current, t0, t1, [](const TelemetrySample& s) { return s.opener.current_ma; }, "#ff7f0e");
  os << polyline(log, velocity, t0, t1, [](const TelemetrySample& s) { return s.closer.velocity_rpm; }, "#1f77b4");
  os << polyline(log, velocity, t0, t1, [](const TelemetrySample& s) { return s.opener.velocity_rpm; }, "#ff7f0e");
  os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"530\" text-anchor=\"middle\" font-size=\"12\">time (s), "
     << t0 << " to " << t1 << "; blue closer, orange opener</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace cinch::telemetry
