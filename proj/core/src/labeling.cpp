#include "strokesig/labeling.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace strokesig {

namespace {

using nlohmann::json;

bool matches_any(const std::string& code, const std::set<std::string>& prefixes) {
  for (const auto& p : prefixes)
    if (code_matches_prefix(code, p)) return true;
  return false;
}

const std::set<std::string>& effective_inclusion(const CodeCriteria& c) {
  return c.refined_inclusion.empty() ? c.initial_inclusion
                                     : c.refined_inclusion;
}

}  // namespace

CodeCriteria CodeCriteria::cryptogenic_default() {
  CodeCriteria c;
  c.initial_inclusion = {"G43.6", "I63", "I67.8"};
  c.refined_inclusion = {"G43.6",  "I63.212", "I63.52", "I63.6",
                         "I63.8",  "I63.9",   "I67.848"};
  c.noncrypto_specific = {"I63.0", "I63.1", "I63.3", "I63.4"};
  c.coincidence_threshold = 0.30;
  c.min_stroke_code_instances = 2;
  return c;
}

CodeCriteria CodeCriteria::general_is_default() {
  CodeCriteria c;
  c.initial_inclusion = {"I63"};
  c.coincidence_threshold = 1.0;  // no specificity filtering
  c.min_stroke_code_instances = 2;
  return c;
}

CodeCriteria read_criteria_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  in >> j;
  CodeCriteria c;
  c.initial_inclusion = j.at("initial_inclusion").get<std::set<std::string>>();
  if (j.contains("refined_inclusion"))
    c.refined_inclusion = j.at("refined_inclusion").get<std::set<std::string>>();
  c.noncrypto_specific =
      j.value("noncrypto_specific", std::set<std::string>{});
  c.coincidence_threshold = j.value("coincidence_threshold", 0.30);
  c.min_stroke_code_instances = j.value("min_stroke_code_instances", 2);
  c.count_all_stroke_codes = j.value("count_all_stroke_codes", true);
  return c;
}

void write_criteria_json(const CodeCriteria& c, const std::string& path) {
  json j = {{"initial_inclusion", c.initial_inclusion},
            {"refined_inclusion", c.refined_inclusion},
            {"noncrypto_specific", c.noncrypto_specific},
            {"coincidence_threshold", c.coincidence_threshold},
            {"min_stroke_code_instances", c.min_stroke_code_instances},
            {"count_all_stroke_codes", c.count_all_stroke_codes}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

std::string to_string(RejectionStage s) {
  switch (s) {
    case RejectionStage::NoStrokeCode: return "no_stroke_code";
    case RejectionStage::NotSpecific: return "not_specific";
    case RejectionStage::CoOccurringNonCryptogenic:
      return "co_occurring_non_cryptogenic";
    case RejectionStage::SingleStrokeCode: return "single_stroke_code";
  }
  return "unknown";
}

RefinedCriteria refine_inclusion_codes(const Cohort& cohort,
                                       const CodeCriteria& criteria) {
  if (cohort.records.empty())
    throw std::invalid_argument("refine_inclusion_codes: empty cohort");

  // Expand candidate prefixes to observed leaf codes.
  std::set<std::string> observed;
  for (const auto& rec : cohort.records)
    for (const auto& [d, c] : rec.condition_events) observed.insert(c.code);

  std::map<std::string, std::set<std::string>> candidates;  // prefix -> leaves
  for (const auto& prefix : criteria.initial_inclusion) {
    auto& leaves = candidates[prefix];
    for (const auto& code : observed)
      if (code_matches_prefix(code, prefix)) leaves.insert(code);
  }

  RefinedCriteria out;
  out.criteria = criteria;
  for (const auto& [prefix, leaves] : candidates) {
    if (leaves.empty()) {
      // Never observed: retained, coincidence undefined.
      CoincidenceEntry e;
      e.code = prefix;
      out.report.push_back(e);
      out.refined_inclusion.insert(prefix);
      continue;
    }
    for (const auto& code : leaves) {
      CoincidenceEntry e;
      e.code = code;
      for (const auto& rec : cohort.records) {
        bool has_code = false, has_noncrypto = false;
        for (const auto& [d, c] : rec.condition_events) {
          if (c.code == code) has_code = true;
          if (matches_any(c.code, criteria.noncrypto_specific))
            has_noncrypto = true;
        }
        if (has_code) {
          ++e.n_with_code;
          if (has_noncrypto) ++e.n_coinciding;
        }
      }
      e.rate = static_cast<double>(e.n_coinciding) / e.n_with_code;
      e.removed = *e.rate > criteria.coincidence_threshold;
      if (!e.removed) out.refined_inclusion.insert(code);
      out.report.push_back(e);
    }
  }
  out.criteria.refined_inclusion = out.refined_inclusion;
  return out;
}

LabelOutcome label_record(const PatientRecord& record,
                          const CodeCriteria& criteria) {
  const auto& inclusion = effective_inclusion(criteria);

  LabelOutcome out;
  bool any_stroke_family = false, any_inclusion = false, any_noncrypto = false;
  int counted_instances = 0;
  std::optional<Day> first;

  for (const auto& [d, c] : record.condition_events) {
    const bool in_initial = matches_any(c.code, criteria.initial_inclusion);
    const bool in_noncrypto = matches_any(c.code, criteria.noncrypto_specific);
    const bool in_refined = matches_any(c.code, inclusion);
    any_stroke_family = any_stroke_family || in_initial || in_noncrypto;
    any_inclusion = any_inclusion || in_refined;
    any_noncrypto = any_noncrypto || in_noncrypto;
    const bool counted =
        criteria.count_all_stroke_codes ? (in_refined || in_noncrypto)
                                        : in_refined;
    if (counted) {
      ++counted_instances;
      if (!first || d < *first) first = d;
    }
  }

  if (!any_stroke_family) {
    out.rejection_stage = RejectionStage::NoStrokeCode;
  } else if (!any_inclusion) {
    out.rejection_stage = RejectionStage::NotSpecific;
  } else if (any_noncrypto && !criteria.noncrypto_specific.empty()) {
    out.rejection_stage = RejectionStage::CoOccurringNonCryptogenic;
  } else if (counted_instances < criteria.min_stroke_code_instances) {
    out.rejection_stage = RejectionStage::SingleStrokeCode;
  } else {
    out.positive = true;
    out.first_event_date = first;
  }
  return out;
}

PredictionWindow prediction_window(const PatientRecord& record,
                                   const LabelOutcome& outcome) {
  constexpr Day kTenYears = 3652;  // floor(10 * 365.25)
  PredictionWindow w;
  if (outcome.positive) {
    if (!outcome.first_event_date)
      throw std::logic_error("positive outcome without first_event_date");
    w.end = *outcome.first_event_date - kDaysPerMonth;
  } else {
    w.end = record.record_end;
  }
  w.start = std::max(record.record_start, w.end - kTenYears);
  w.excluded = w.end <= record.record_start;
  return w;
}

void write_labels_csv(const std::vector<LabeledRecordRow>& rows,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "patient_id,label,stage,first_event_date,window_start,window_end,"
         "excluded\n";
  for (const auto& r : rows) {
    out << r.patient_id << "," << (r.outcome.positive ? "positive" : "negative")
        << ","
        << (r.outcome.rejection_stage ? to_string(*r.outcome.rejection_stage)
                                      : "")
        << ","
        << (r.outcome.first_event_date
                ? format_date(*r.outcome.first_event_date)
                : "")
        << "," << format_date(r.window.start) << ","
        << format_date(r.window.end) << "," << (r.window.excluded ? 1 : 0)
        << "\n";
  }
}

std::vector<LabeledRecordRow> read_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<LabeledRecordRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[7];
    for (int i = 0; i < 7; ++i) std::getline(ss, f[i], ',');
    LabeledRecordRow r;
    r.patient_id = f[0];
    r.outcome.positive = f[1] == "positive";
    if (!f[2].empty()) {
      if (f[2] == "no_stroke_code")
        r.outcome.rejection_stage = RejectionStage::NoStrokeCode;
      else if (f[2] == "not_specific")
        r.outcome.rejection_stage = RejectionStage::NotSpecific;
      else if (f[2] == "co_occurring_non_cryptogenic")
        r.outcome.rejection_stage = RejectionStage::CoOccurringNonCryptogenic;
      else if (f[2] == "single_stroke_code")
        r.outcome.rejection_stage = RejectionStage::SingleStrokeCode;
    }
    if (!f[3].empty()) r.outcome.first_event_date = parse_date(f[3]);
    r.window.start = parse_date(f[4]);
    r.window.end = parse_date(f[5]);
    r.window.excluded = f[6] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace strokesig
