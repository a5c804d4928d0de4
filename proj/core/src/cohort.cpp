#include "strokesig/cohort.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace strokesig {

using nlohmann::json;

std::string to_string(VariableKind k) {
  switch (k) {
    case VariableKind::Condition: return "condition";
    case VariableKind::Medication: return "medication";
    case VariableKind::Demographic: return "demographic";
    case VariableKind::Measurement: return "measurement";
  }
  return "unknown";
}

VariableKind variable_kind_from_string(const std::string& s) {
  if (s == "condition") return VariableKind::Condition;
  if (s == "medication") return VariableKind::Medication;
  if (s == "demographic") return VariableKind::Demographic;
  if (s == "measurement") return VariableKind::Measurement;
  throw std::invalid_argument("unknown variable kind: " + s);
}

bool code_matches_prefix(const std::string& code, const std::string& prefix) {
  if (prefix.empty() || code.size() < prefix.size()) return false;
  if (code.compare(0, prefix.size(), prefix) != 0) return false;
  // Boundary: exact match or the next character starts a new hierarchy level.
  return code.size() == prefix.size() || code[prefix.size()] == '.' ||
         prefix.back() == '.';
}

std::vector<RecordViolation> validate_record(const PatientRecord& r) {
  std::vector<RecordViolation> out;
  if (r.record_start > r.record_end)
    out.push_back({"record_start", "record_start > record_end"});
  auto in_span = [&](Day d) { return d >= r.record_start && d <= r.record_end; };
  for (const auto& [d, c] : r.condition_events) {
    if (!in_span(d))
      out.push_back({"condition_events",
                     "event " + c.code + " at " + format_date(d) +
                         " outside record span"});
    if (c.code.empty()) out.push_back({"condition_events", "empty code"});
  }
  for (const auto& [var, obs] : r.measurements) {
    Day prev = r.record_start - 1;
    for (const auto& [d, v] : obs) {
      if (!in_span(d))
        out.push_back({"measurements",
                       var + " observation at " + format_date(d) +
                           " outside record span"});
      if (d <= prev)
        out.push_back({"measurements", var + " dates not strictly increasing"});
      prev = d;
      if (!std::isfinite(v))
        out.push_back({"measurements", var + " non-finite value"});
    }
  }
  Day prev_snap = r.record_start - 1;
  for (const auto& [d, meds] : r.med_snapshots) {
    if (!in_span(d))
      out.push_back({"med_snapshots",
                     "visit at " + format_date(d) + " outside record span"});
    if (d <= prev_snap)
      out.push_back({"med_snapshots", "non-increasing snapshot dates"});
    prev_snap = d;
    (void)meds;
  }
  return out;
}

namespace {

json record_to_json(const PatientRecord& r) {
  json j;
  j["patient_id"] = r.patient_id;
  j["record_start"] = format_date(r.record_start);
  j["record_end"] = format_date(r.record_end);
  json evs = json::array();
  for (const auto& [d, c] : r.condition_events)
    evs.push_back({{"date", format_date(d)}, {"code", c.code}});
  j["condition_events"] = std::move(evs);
  json meas = json::object();
  for (const auto& [var, obs] : r.measurements) {
    json arr = json::array();
    for (const auto& [d, v] : obs)
      arr.push_back({{"date", format_date(d)}, {"value", v}});
    meas[var] = std::move(arr);
  }
  j["measurements"] = std::move(meas);
  json snaps = json::array();
  for (const auto& [d, meds] : r.med_snapshots)
    snaps.push_back({{"date", format_date(d)}, {"meds", meds}});
  j["med_snapshots"] = std::move(snaps);
  j["demographics"] = r.demographics;
  return j;
}

PatientRecord record_from_json(const json& j) {
  PatientRecord r;
  r.patient_id = j.at("patient_id").get<std::string>();
  r.record_start = parse_date(j.at("record_start").get<std::string>());
  r.record_end = parse_date(j.at("record_end").get<std::string>());
  for (const auto& e : j.at("condition_events")) {
    r.condition_events.emplace_back(
        parse_date(e.at("date").get<std::string>()),
        CodedConcept{e.at("code").get<std::string>(), VariableKind::Condition});
  }
  for (const auto& [var, arr] : j.at("measurements").items()) {
    auto& obs = r.measurements[var];
    for (const auto& o : arr)
      obs.emplace_back(parse_date(o.at("date").get<std::string>()),
                       o.at("value").get<double>());
  }
  for (const auto& s : j.at("med_snapshots")) {
    r.med_snapshots.emplace_back(parse_date(s.at("date").get<std::string>()),
                                 s.at("meds").get<std::set<std::string>>());
  }
  r.demographics = j.at("demographics").get<std::map<std::string, int>>();
  return r;
}

}  // namespace

void write_cohort_jsonl(const Cohort& cohort, const std::string& records_path,
                        const std::string& dictionary_path) {
  {
    json dict = json::array();
    for (const auto& v : cohort.variable_dictionary)
      dict.push_back({{"id", v.id},
                      {"kind", to_string(v.kind)},
                      {"display_name", v.display_name}});
    std::ofstream out(dictionary_path);
    if (!out) throw std::runtime_error("cannot open " + dictionary_path);
    out << json{{"variables", dict}}.dump(2) << "\n";
  }
  std::ofstream out(records_path);
  if (!out) throw std::runtime_error("cannot open " + records_path);
  for (const auto& r : cohort.records) out << record_to_json(r).dump() << "\n";
}

Cohort read_cohort_jsonl(const std::string& records_path,
                         const std::string& dictionary_path) {
  Cohort c;
  {
    std::ifstream in(dictionary_path);
    if (!in) throw std::runtime_error("cannot open " + dictionary_path);
    json j;
    in >> j;
    for (const auto& v : j.at("variables"))
      c.variable_dictionary.push_back(
          {v.at("id").get<std::string>(),
           variable_kind_from_string(v.at("kind").get<std::string>()),
           v.at("display_name").get<std::string>()});
  }
  std::ifstream in(records_path);
  if (!in) throw std::runtime_error("cannot open " + records_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    c.records.push_back(record_from_json(json::parse(line)));
  }
  return c;
}

}  // namespace strokesig
