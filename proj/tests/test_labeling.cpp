#include <doctest.h>

#include <filesystem>

#include "strokesig/labeling.hpp"

using namespace strokesig;

namespace {

PatientRecord record_with(const std::vector<std::pair<Day, std::string>>& events,
                          Day start = 0, Day end = 5000) {
  static int counter = 0;
  PatientRecord r;
  r.patient_id = "L" + std::to_string(counter++);
  r.record_start = start;
  r.record_end = end;
  for (const auto& [d, code] : events)
    r.condition_events.push_back({d, {code, VariableKind::Condition}});
  return r;
}

}  // namespace

TEST_CASE("stage 1: no stroke codes at all") {
  auto r = record_with({{100, "I10"}, {200, "E11.9"}});
  auto out = label_record(r, CodeCriteria::cryptogenic_default());
  CHECK_FALSE(out.positive);
  REQUIRE(out.rejection_stage.has_value());
  CHECK(*out.rejection_stage == RejectionStage::NoStrokeCode);
}

TEST_CASE("stage 2: stroke codes present but none specific") {
  // I63.2 is under the initial prefix I63 but not in the refined list.
  auto r = record_with({{100, "I63.2"}, {300, "I63.2"}});
  auto out = label_record(r, CodeCriteria::cryptogenic_default());
  CHECK_FALSE(out.positive);
  CHECK(*out.rejection_stage == RejectionStage::NotSpecific);
}

TEST_CASE("stage 3: co-occurring non-cryptogenic code") {
  auto r = record_with({{100, "I63.9"}, {300, "I63.9"}, {400, "I63.3"}});
  auto out = label_record(r, CodeCriteria::cryptogenic_default());
  CHECK_FALSE(out.positive);
  CHECK(*out.rejection_stage == RejectionStage::CoOccurringNonCryptogenic);
}

TEST_CASE("stage 4: a single stroke code is not enough") {
  auto r = record_with({{100, "I63.52"}});
  auto out = label_record(r, CodeCriteria::cryptogenic_default());
  CHECK_FALSE(out.positive);
  CHECK(*out.rejection_stage == RejectionStage::SingleStrokeCode);
}

TEST_CASE("positive record carries the earliest event date") {
  auto r = record_with({{300, "I63.9"}, {100, "I63.9"}});
  auto out = label_record(r, CodeCriteria::cryptogenic_default());
  CHECK(out.positive);
  CHECK_FALSE(out.rejection_stage.has_value());
  REQUIRE(out.first_event_date.has_value());
  CHECK(*out.first_event_date == 100);
}

TEST_CASE("enlarging the exclusion set never creates positives") {
  auto r = record_with({{100, "I63.9"}, {300, "I63.9"}});
  auto base = CodeCriteria::cryptogenic_default();
  REQUIRE(label_record(r, base).positive);
  auto wider = base;
  wider.noncrypto_specific.insert("I63.9");
  CHECK_FALSE(label_record(r, wider).positive);
}

TEST_CASE("prediction window: negative spanning 12 years keeps the final 10") {
  auto r = record_with({}, 0, static_cast<Day>(12 * 365.25));
  auto out = label_record(r, CodeCriteria::cryptogenic_default());
  auto w = prediction_window(r, out);
  CHECK_FALSE(w.excluded);
  CHECK(w.end == r.record_end);
  CHECK(w.end - w.start == 3652);
}

TEST_CASE("prediction window: positive ends one month before the event") {
  const Day stroke = static_cast<Day>(5 * 365.25);
  auto r = record_with({{stroke, "I63.9"}, {stroke + 10, "I63.9"}}, 0, 4000);
  auto out = label_record(r, CodeCriteria::cryptogenic_default());
  REQUIRE(out.positive);
  auto w = prediction_window(r, out);
  CHECK_FALSE(w.excluded);
  CHECK(w.end == stroke - 30);
  CHECK(w.start == 0);  // record shorter than 10 years
}

TEST_CASE("prediction window: stroke two weeks in excludes the record") {
  auto r = record_with({{14, "I63.9"}, {20, "I63.9"}}, 0, 4000);
  auto out = label_record(r, CodeCriteria::cryptogenic_default());
  REQUIRE(out.positive);
  auto w = prediction_window(r, out);
  CHECK(w.excluded);
}

namespace {

Cohort coincidence_cohort() {
  // Code I63.7: present in 4 records, co-occurring with an exclusion code in
  // 2 of them (50% > 30% threshold). Code I63.9: 4 records, 1 coinciding.
  Cohort c;
  c.records.push_back(record_with({{10, "I63.7"}, {20, "I63.3"}}));
  c.records.push_back(record_with({{10, "I63.7"}, {20, "I63.0"}}));
  c.records.push_back(record_with({{10, "I63.7"}}));
  c.records.push_back(record_with({{10, "I63.7"}}));
  c.records.push_back(record_with({{10, "I63.9"}, {20, "I63.4"}}));
  c.records.push_back(record_with({{10, "I63.9"}}));
  c.records.push_back(record_with({{10, "I63.9"}}));
  c.records.push_back(record_with({{10, "I63.9"}}));
  return c;
}

}  // namespace

TEST_CASE("coincidence refinement removes codes above the threshold") {
  CodeCriteria crit;
  crit.initial_inclusion = {"I63"};
  crit.noncrypto_specific = {"I63.0", "I63.1", "I63.3", "I63.4"};
  crit.coincidence_threshold = 0.30;

  auto refined = refine_inclusion_codes(coincidence_cohort(), crit);
  CHECK(refined.refined_inclusion.count("I63.9") == 1);
  CHECK(refined.refined_inclusion.count("I63.7") == 0);

  bool saw_removed = false;
  for (const auto& e : refined.report)
    if (e.code == "I63.7") {
      CHECK(e.n_with_code == 4);
      CHECK(e.n_coinciding == 2);
      CHECK(*e.rate == doctest::Approx(0.5));
      CHECK(e.removed);
      saw_removed = true;
    }
  CHECK(saw_removed);
}

TEST_CASE("threshold 1.0 removes nothing") {
  CodeCriteria crit;
  crit.initial_inclusion = {"I63"};
  crit.noncrypto_specific = {"I63.0", "I63.1", "I63.3", "I63.4"};
  crit.coincidence_threshold = 1.0;
  auto refined = refine_inclusion_codes(coincidence_cohort(), crit);
  for (const auto& e : refined.report) CHECK_FALSE(e.removed);
  CHECK(refined.refined_inclusion.count("I63.7") == 1);
}

TEST_CASE("unobserved prefixes are retained with undefined rate") {
  CodeCriteria crit;
  crit.initial_inclusion = {"I63", "I67.8"};
  crit.noncrypto_specific = {"I63.3"};
  auto refined = refine_inclusion_codes(coincidence_cohort(), crit);
  CHECK(refined.refined_inclusion.count("I67.8") == 1);
  bool found = false;
  for (const auto& e : refined.report)
    if (e.code == "I67.8") {
      CHECK_FALSE(e.rate.has_value());
      CHECK_FALSE(e.removed);
      found = true;
    }
  CHECK(found);
}

TEST_CASE("criteria JSON and labels CSV round-trip") {
  const auto dir =
      std::filesystem::temp_directory_path() / "strokesig_label_test";
  std::filesystem::create_directories(dir);

  auto crit = CodeCriteria::cryptogenic_default();
  write_criteria_json(crit, (dir / "c.json").string());
  auto back = read_criteria_json((dir / "c.json").string());
  CHECK(back.initial_inclusion == crit.initial_inclusion);
  CHECK(back.refined_inclusion == crit.refined_inclusion);
  CHECK(back.noncrypto_specific == crit.noncrypto_specific);
  CHECK(back.coincidence_threshold == crit.coincidence_threshold);

  std::vector<LabeledRecordRow> rows(2);
  rows[0].patient_id = "A";
  rows[0].outcome.positive = true;
  rows[0].outcome.first_event_date = 1000;
  rows[0].window = {0, 970, false};
  rows[1].patient_id = "B";
  rows[1].outcome.positive = false;
  rows[1].outcome.rejection_stage = RejectionStage::NotSpecific;
  rows[1].window = {100, 4000, false};
  write_labels_csv(rows, (dir / "l.csv").string());
  auto rback = read_labels_csv((dir / "l.csv").string());
  REQUIRE(rback.size() == 2);
  CHECK(rback[0].outcome.positive);
  CHECK(*rback[0].outcome.first_event_date == 1000);
  CHECK(rback[1].window.start == 100);
  CHECK(*rback[1].outcome.rejection_stage == RejectionStage::NotSpecific);
  std::filesystem::remove_all(dir);
}
