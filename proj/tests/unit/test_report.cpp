#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "xiqe/error.hpp"
#include "xiqe/report.hpp"

namespace xiqe {
namespace {

using testing::make_record;
using testing::records_with_means;

std::vector<EvaluationRecord> mixed_records() {
  std::vector<EvaluationRecord> recs;
  // Six images, each evaluated in repeats 0 and 1.
  for (int i = 0; i < 12; ++i) {
    const int id = i % 6;
    const std::string tag = id % 3 == 0 ? "sd" : id % 3 == 1 ? "dalle" : "real";
    recs.push_back(make_record("img-" + std::to_string(id), tag, i % 11,
                               i % 4 == 3 ? -1 : 1 + i % 5, 2 + i % 7, tag == "real",
                               i / 6));
  }
  return recs;
}

TEST(Rounding, HalfUp) {
  EXPECT_EQ(format_fixed(14.52), "14.52");
  EXPECT_EQ(format_fixed(2.675), "2.68");  // binary 2.67499999...
  EXPECT_EQ(format_fixed(0.125), "0.13");
  EXPECT_EQ(format_fixed(-0.001), "0.00");
  EXPECT_EQ(format_fixed(1.0, 4), "1.0000");
  EXPECT_DOUBLE_EQ(round_half_up(5.465), 5.47);
}

TEST(Aggregate, PublishedMeansGiveTheirOverall) {
  auto a = records_with_means("modelA", {547, 329, 576});
  auto b = records_with_means("modelB", {532, 296, 564});
  a.insert(a.end(), b.begin(), b.end());
  const auto table = aggregate(a);
  ASSERT_EQ(table.rows.size(), 2u);
  const auto& ra = table.rows[0].summary;
  const auto& rb = table.rows[1].summary;
  EXPECT_EQ(ra.model_tag, "modelA");
  EXPECT_NEAR(*ra.overall, 14.52, 0.01);
  EXPECT_NEAR(*rb.overall, 13.92, 0.01);
  EXPECT_EQ(format_fixed(*ra.overall), "14.52");
  EXPECT_EQ(format_fixed(*rb.overall), "13.92");
  EXPECT_EQ(format_fixed(*ra.mean_alignment), "3.29");
  for (const auto& row : table.rows) {
    const auto& s = row.summary;
    EXPECT_EQ(*s.overall, *s.mean_fidelity + *s.mean_alignment + *s.mean_aesthetics);
  }
}

TEST(Aggregate, OrderingAndEmptyRows) {
  std::vector<EvaluationRecord> recs{
      make_record("a", "low", 1, 1, 1), make_record("b", "high", 9, 5, 9),
      make_record("c", "broken", -1, -1, -1), make_record("d", "b-tie", 5, 3, 5),
      make_record("e", "a-tie", 5, 3, 5)};
  const auto table = aggregate(recs);
  std::vector<std::string> order;
  for (const auto& r : table.rows) order.push_back(r.summary.model_tag);
  EXPECT_EQ(order, (std::vector<std::string>{"high", "a-tie", "b-tie", "low", "broken"}));
  EXPECT_TRUE(table.rows.back().summary.empty());
}

TEST(Aggregate, PermutationInvariant) {
  auto recs = mixed_records();
  const auto expected = render_report(build_report_input(recs), ReportFormat::Json);
  std::mt19937 rng(3);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(recs.begin(), recs.end(), rng);
    EXPECT_EQ(render_report(build_report_input(recs), ReportFormat::Json), expected);
  }
}

TEST(ExternalMetrics, ParsesAndJoins) {
  const auto ext = parse_external_metrics(
      "model_tag,CLIP,ImageReward\nsd,0.31,0.12\ndalle, 0.29 ,NA\nother,,-\n");
  EXPECT_EQ(ext.columns, (std::vector<std::string>{"CLIP", "ImageReward"}));
  EXPECT_EQ(ext.by_model.at("dalle")[0], 0.29);
  EXPECT_FALSE(ext.by_model.at("dalle")[1]);
  EXPECT_FALSE(ext.by_model.at("other")[0]);

  AggregateOptions opts;
  opts.external = &ext;
  const auto recs = mixed_records();
  const auto table = aggregate(recs, opts);
  for (const auto& row : table.rows) {
    ASSERT_EQ(row.external.size(), 2u);
    if (row.summary.model_tag == "sd") EXPECT_EQ(row.external[0], 0.31);
    if (row.summary.model_tag == "real") EXPECT_FALSE(row.external[0]);
  }
  opts.order_by = "CLIP";
  EXPECT_EQ(aggregate(recs, opts).rows[0].summary.model_tag, "sd");
  opts.order_by = "FID";
  EXPECT_THROW(aggregate(recs, opts), Error);

  const auto md = render_report(build_report_input(recs, {&ext, std::nullopt}),
                                ReportFormat::Markdown);
  EXPECT_NE(md.find("ingested, not computed"), std::string::npos);
}

TEST(ExternalMetrics, Errors) {
  EXPECT_THROW(parse_external_metrics(""), Error);
  EXPECT_THROW(parse_external_metrics("model,CLIP\nsd,1\n"), Error);
  EXPECT_THROW(parse_external_metrics("model_tag,CLIP\nsd,1,2\n"), Error);
  EXPECT_THROW(parse_external_metrics("model_tag,CLIP\nsd,abc\n"), Error);
  try {
    parse_external_metrics("model_tag,CLIP\nsd,1\nsd,2\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DuplicateId);
  }
}

TEST(Report, DeterministicBytes) {
  const auto recs = mixed_records();
  for (auto fmt : {ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json}) {
    EXPECT_EQ(render_report(build_report_input(recs), fmt),
              render_report(build_report_input(recs), fmt));
  }
}

TEST(Report, CsvHasOneRowPerModel) {
  const auto csv = render_report(build_report_input(mixed_records()), ReportFormat::Csv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3);
  EXPECT_EQ(csv.rfind("model_tag,n_samples,fidelity,alignment,aesthetics,overall,", 0), 0u);
}

TEST(Report, JsonRoundTrip) {
  auto recs = records_with_means("modelA", {547, 329, 576});
  const auto json = render_report(build_report_input(recs), ReportFormat::Json);
  const auto table = table_from_json(json);
  const auto direct = aggregate(recs);
  ASSERT_EQ(table.rows.size(), direct.rows.size());
  EXPECT_EQ(table.rows[0].summary.overall, direct.rows[0].summary.overall);
  EXPECT_EQ(table.rows[0].summary.mean_fidelity, direct.rows[0].summary.mean_fidelity);
  EXPECT_EQ(table.rows[0].summary.success_rate, direct.rows[0].summary.success_rate);
  EXPECT_THROW(table_from_json("[]"), Error);
  EXPECT_THROW(table_from_json("not json"), Error);
}

TEST(Report, MarkdownSections) {
  const auto md = render_report(build_report_input(mixed_records()), ReportFormat::Markdown);
  for (const char* section : {"## Models", "## Answer success rate", "## Failures per task",
                              "## Score distributions", "## Statistics", "## Provenance",
                              "0.11", "0.53"}) {
    EXPECT_NE(md.find(section), std::string::npos) << section;
  }
  EXPECT_NE(md.find("| alignment | NoScore | 3 |"), std::string::npos) << md;
}

TEST(Report, StatisticsSection) {
  const auto in = build_report_input(mixed_records());
  ASSERT_TRUE(in.recall);
  EXPECT_TRUE(in.fidelity_ks);
  EXPECT_TRUE(in.alpha[0]);  // repeats 0 and 1 present
  EXPECT_EQ(in.provenance.repeats, (std::vector<int>{0, 1}));
  EXPECT_EQ(in.record_count, 12u);
  EXPECT_NEAR(*in.success_rates[1], 9.0 / 12.0, 1e-15);

  const auto single = build_report_input({make_record("a", "m", 3, 3, 3)});
  EXPECT_FALSE(single.alpha[0]);
  EXPECT_FALSE(single.fidelity_ks);
}

TEST(Report, FormatNames) {
  EXPECT_EQ(report_format_from_string("md"), ReportFormat::Markdown);
  EXPECT_EQ(report_format_from_string("json"), ReportFormat::Json);
  EXPECT_FALSE(report_format_from_string("html"));
}

}  // namespace
}  // namespace xiqe
