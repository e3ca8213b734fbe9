#include "cephlm/evalkit/report.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <sstream>

#include "cephlm/error.hpp"

namespace cephlm::evalkit {

using nlohmann::json;
using patchset::Tissue;

namespace {

double round6(double v) { return std::round(v * 1e6) / 1e6; }

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct Moments {
  double mean = 0.0, std = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

double mean_of(const std::vector<double>& v) { return moments(v).mean; }

const LandmarkOutcome* find_outcome(const CaseOutcome& c, const std::string& name) {
  for (const auto& l : c.landmarks) {
    if (l.landmark == name) return &l;
  }
  return nullptr;
}

}  // namespace

SuccessSummary success_rate(std::span<const CaseOutcome> cases, std::span<const LandmarkInfo> landmarks,
                            double alpha_limit, bool filtered) {
  SuccessSummary out;
  std::vector<double> pcts;
  for (const auto& info : landmarks) {
    LandmarkSuccess row;
    row.landmark = info.name;
    for (const auto& c : cases) {
      const LandmarkOutcome* o = find_outcome(c, info.name);
      if (!o) continue;
      ++row.cases;
      const bool missing = filtered ? o->missing : o->missing_unfiltered;
      if (missing) {
        ++row.missing;
        continue;
      }
      const Point est = filtered ? o->estimate : o->estimate_unfiltered;
      if (within_ellipse(info.ellipse.centered_at(o->truth), est, alpha_limit)) ++row.within;
    }
    row.pct = row.cases ? 100.0 * static_cast<double>(row.within) / static_cast<double>(row.cases) : 0.0;
    pcts.push_back(row.pct);
    out.rows.push_back(row);
  }
  out.mean_pct = mean_of(pcts);
  return out;
}

EvaluationReport build_report(const ReportInput& input) {
  EvaluationReport rep;
  rep.alpha_limit = input.alpha_limit;
  rep.folds = input.folds;
  for (double a : input.fold_pc_val_acc) rep.fold_pc_val_acc.push_back(round6(a));

  const auto success = success_rate(input.cases, input.landmarks, input.alpha_limit, true);
  const auto success_unf = success_rate(input.cases, input.landmarks, input.alpha_limit, false);
  std::vector<double> all_mm, all_px, hard_mm, soft_mm, soft_unf_mm, rel_all, rel_hard;
  std::size_t missing_total = 0;
  for (std::size_t li = 0; li < input.landmarks.size(); ++li) {
    const auto& info = input.landmarks[li];
    ReportRow row;
    row.landmark = info.name;
    row.tissue = info.tissue;
    std::vector<double> err, err_unf;
    for (const auto& c : input.cases) {
      const LandmarkOutcome* o = find_outcome(c, info.name);
      if (!o) continue;
      ++row.n_cases;
      if (o->missing) {
        ++row.n_missing;
      } else {
        const double mm = euclidean_error_mm(o->estimate, o->truth, c.spacing_mm);
        err.push_back(mm);
        all_mm.push_back(mm);
        all_px.push_back(mm / c.spacing_mm);
        (info.tissue == Tissue::hard ? hard_mm : soft_mm).push_back(mm);
      }
      if (o->missing_unfiltered) {
        ++row.n_missing_unfiltered;
      } else {
        const double mm = euclidean_error_mm(o->estimate_unfiltered, o->truth, c.spacing_mm);
        err_unf.push_back(mm);
        if (info.tissue == Tissue::soft) soft_unf_mm.push_back(mm);
      }
    }
    missing_total += row.n_missing;
    const Moments m = moments(err), mu = moments(err_unf);
    row.error_mean_mm = round6(m.mean);
    row.error_std_mm = round6(m.std);
    row.unfiltered_mean_mm = round6(mu.mean);
    row.unfiltered_std_mm = round6(mu.std);
    const auto axes = ellipse_axes(info.ellipse, input.alpha_limit);
    row.angle_deg = round6(axes.angle_deg);
    row.semiminor_mm = round6(axes.semiminor * input.pixel_spacing_mm);
    row.semimajor_mm = round6(axes.semimajor * input.pixel_spacing_mm);
    row.reliability_pct = round6(success.rows[li].pct);
    row.unfiltered_reliability_pct = round6(success_unf.rows[li].pct);
    rel_all.push_back(success.rows[li].pct);
    if (info.tissue == Tissue::hard) rel_hard.push_back(success.rows[li].pct);
    rep.rows.push_back(row);
  }

  auto& s = rep.summary;
  s.n_cases = input.cases.size();
  s.mean_error_mm = round6(mean_of(all_mm));
  s.mean_error_px = round6(mean_of(all_px));
  s.hard_error_mm = round6(mean_of(hard_mm));
  s.soft_error_mm = round6(mean_of(soft_mm));
  s.soft_unfiltered_error_mm = round6(mean_of(soft_unf_mm));
  s.mean_reliability_pct = round6(mean_of(rel_all));
  s.hard_reliability_pct = round6(mean_of(rel_hard));
  s.n_missing = missing_total;
  s.mean_pc_val_acc = round6(mean_of(input.fold_pc_val_acc));
  return rep;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  if (s == "text") return ReportFormat::text;
  throw Error(Errc::config_error, "unknown report format '" + std::string(s) + "'");
}

namespace {

std::string render_csv(const EvaluationReport& r) {
  std::ostringstream out;
  out << "landmark,tissue,n_cases,n_missing,error_mean_mm,error_std_mm,n_missing_unfiltered,unfiltered_mean_mm,"
         "unfiltered_std_mm,angle_deg,semiminor_mm,semimajor_mm,reliability_pct,unfiltered_reliability_pct\n";
  for (const auto& row : r.rows) {
    out << row.landmark << ',' << patchset::tissue_name(row.tissue) << ',' << row.n_cases << ',' << row.n_missing << ','
        << fixed(row.error_mean_mm) << ',' << fixed(row.error_std_mm) << ',' << row.n_missing_unfiltered << ','
        << fixed(row.unfiltered_mean_mm) << ',' << fixed(row.unfiltered_std_mm) << ',' << fixed(row.angle_deg) << ','
        << fixed(row.semiminor_mm) << ',' << fixed(row.semimajor_mm) << ',' << fixed(row.reliability_pct) << ','
        << fixed(row.unfiltered_reliability_pct) << '\n';
  }
  return out.str();
}

std::string render_json(const EvaluationReport& r) {
  json doc;
  doc["alpha"] = r.alpha_limit;
  json t1 = json::array(), t2 = json::array(), t3 = json::array();
  for (const auto& row : r.rows) {
    t1.push_back({{"landmark", row.landmark},
                  {"tissue", std::string(patchset::tissue_name(row.tissue))},
                  {"n_cases", row.n_cases},
                  {"n_missing", row.n_missing},
                  {"error_mean_mm", row.error_mean_mm},
                  {"error_std_mm", row.error_std_mm}});
    t2.push_back({{"landmark", row.landmark},
                  {"angle_deg", row.angle_deg},
                  {"semiminor_mm", row.semiminor_mm},
                  {"semimajor_mm", row.semimajor_mm},
                  {"reliability_pct", row.reliability_pct}});
    if (row.tissue == Tissue::soft) {
      t3.push_back({{"landmark", row.landmark},
                    {"n_missing_unfiltered", row.n_missing_unfiltered},
                    {"unfiltered_mean_mm", row.unfiltered_mean_mm},
                    {"unfiltered_std_mm", row.unfiltered_std_mm},
                    {"filtered_mean_mm", row.error_mean_mm},
                    {"filtered_std_mm", row.error_std_mm},
                    {"unfiltered_reliability_pct", row.unfiltered_reliability_pct},
                    {"filtered_reliability_pct", row.reliability_pct}});
    }
  }
  doc["table1"] = t1;
  doc["table2"] = t2;
  doc["table3"] = t3;
  const auto& s = r.summary;
  doc["summary"] = {{"n_cases", s.n_cases},
                    {"mean_error_mm", s.mean_error_mm},
                    {"mean_error_px", s.mean_error_px},
                    {"hard_error_mm", s.hard_error_mm},
                    {"soft_error_mm", s.soft_error_mm},
                    {"soft_unfiltered_error_mm", s.soft_unfiltered_error_mm},
                    {"mean_reliability_pct", s.mean_reliability_pct},
                    {"hard_reliability_pct", s.hard_reliability_pct},
                    {"n_missing", s.n_missing},
                    {"mean_pc_val_acc", s.mean_pc_val_acc}};
  json folds = json::array();
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    json entry = {{"fold", f}, {"cases", r.folds[f]}};
    if (f < r.fold_pc_val_acc.size()) entry["pc_val_acc"] = r.fold_pc_val_acc[f];
    folds.push_back(entry);
  }
  doc["folds"] = folds;
  return doc.dump(2) + "\n";
}

// Pads to w display columns; UTF-8 continuation bytes take no column.
std::string pad(const std::string& s, std::size_t w) {
  std::size_t cols = 0;
  for (unsigned char c : s) cols += (c & 0xC0) != 0x80;
  return cols >= w ? s + " " : s + std::string(w - cols, ' ');
}

// "n/a" when every case was missing.
std::string mean_std(double mean, double std, std::size_t n_cases, std::size_t n_missing) {
  if (n_missing >= n_cases) return "n/a";
  return fixed(mean, 3) + "\xC2\xB1" + fixed(std, 3);
}

std::string render_text(const EvaluationReport& r) {
  std::ostringstream out;
  out << "Table I. Euclidean error (mm), mean\xC2\xB1std\n";
  out << pad("Landmark", 12) << pad("Tissue", 8) << pad("Error (mm)", 20) << "Missing\n";
  for (const auto& row : r.rows) {
    out << pad(row.landmark, 12) << pad(std::string(patchset::tissue_name(row.tissue)), 8)
        << pad(mean_std(row.error_mean_mm, row.error_std_mm, row.n_cases, row.n_missing), 20) << row.n_missing << '\n';
  }
  out << "\nTable II. Confidence ellipses (alpha=" << fixed(r.alpha_limit, 2) << ")\n";
  out << pad("Landmark", 12) << pad("Angle (deg)", 13) << pad("Semiminor (mm)", 16) << pad("Semimajor (mm)", 16)
      << "Reliability (%)\n";
  for (const auto& row : r.rows) {
    out << pad(row.landmark, 12) << pad(fixed(row.angle_deg, 1), 13) << pad(fixed(row.semiminor_mm, 2), 16)
        << pad(fixed(row.semimajor_mm, 2), 16) << fixed(row.reliability_pct, 1) << '\n';
  }
  out << "\nTable III. Soft tissue error (mm), unfiltered (filtered)\n";
  out << pad("Landmark", 12) << pad("Error (mm)", 28) << "Reliability (%)\n";
  for (const auto& row : r.rows) {
    if (row.tissue != Tissue::soft) continue;
    out << pad(row.landmark, 12)
        << pad(mean_std(row.unfiltered_mean_mm, row.unfiltered_std_mm, row.n_cases, row.n_missing_unfiltered) + " (" +
                   mean_std(row.error_mean_mm, row.error_std_mm, row.n_cases, row.n_missing) + ")",
               28)
        << fixed(row.unfiltered_reliability_pct, 1) << " (" << fixed(row.reliability_pct, 1) << ")\n";
  }
  const auto& s = r.summary;
  out << "\nCases: " << s.n_cases << "  mean error: " << fixed(s.mean_error_mm, 3) << " mm (" << fixed(s.mean_error_px, 2)
      << " px)  mean reliability: " << fixed(s.mean_reliability_pct, 1) << "%  missing: " << s.n_missing << '\n';
  return out.str();
}

}  // namespace

std::string render_report(const EvaluationReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::csv:
      return render_csv(report);
    case ReportFormat::json:
      return render_json(report);
    case ReportFormat::text:
      return render_text(report);
  }
  return {};
}

std::string render_ellipse_csv(const EvaluationReport& report) {
  std::ostringstream out;
  out << "landmark,angle_deg,semiminor_mm,semimajor_mm,reliability_pct\n";
  for (const auto& row : report.rows) {
    out << row.landmark << ',' << fixed(row.angle_deg) << ',' << fixed(row.semiminor_mm) << ','
        << fixed(row.semimajor_mm) << ',' << fixed(row.reliability_pct) << '\n';
  }
  return out.str();
}

}  // namespace cephlm::evalkit
