#include <gtest/gtest.h>

#include "xiqe/assets.hpp"
#include "xiqe/error.hpp"
#include "xiqe/prompts.hpp"

namespace xiqe {
namespace {

std::size_t count(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + 1)) {
    ++n;
  }
  return n;
}

const PromptSet& pack() { return PromptSet::canonical(); }

TEST(PromptPack, HashMatchesPinnedDigest) {
  EXPECT_EQ(pack().digest(), kCanonicalPromptPackSha256);
  EXPECT_EQ(sha256_hex(assets::prompt_pack()), kCanonicalPromptPackSha256);
}

TEST(PromptPack, HasTwelveTemplates) {
  EXPECT_EQ(pack().templates().size(), 12u);
  for (auto task : kAllTasks) {
    for (auto v : {PromptVariant::Main, PromptVariant::Baseline, PromptVariant::NoFormat,
                   PromptVariant::Continue}) {
      const auto& t = pack().select(v, task);
      EXPECT_EQ(t.task, task);
      EXPECT_EQ(t.variant, v);
      EXPECT_EQ(t.id, std::string(to_string(task)) + "." + std::string(to_string(v)));
    }
  }
}

TEST(Render, MainFidelityIsVerbatim) {
  const auto text = render(pack().select(PromptVariant::Main, TaskKind::Fidelity));
  EXPECT_EQ(text.rfind("You are my assistant to evaluate the image quality.", 0), 0u);
  EXPECT_NE(text.find("Definitely AI-generated (0-1)"), std::string::npos);
  EXPECT_EQ(text.find('\r'), std::string::npos);
}

TEST(Render, MainAlignmentSubstitutesCaption) {
  const auto text =
      render(pack().select(PromptVariant::Main, TaskKind::Alignment), "a cat on a sofa");
  EXPECT_NE(text.find("a cat on a sofa"), std::string::npos);
  EXPECT_EQ(text.find(kCaptionSlot), std::string::npos);
  const auto four = text.find("Has a few minor discrepancies (4)");
  const auto five = text.find("Matches exactly (5)");
  ASSERT_NE(five, std::string::npos);
  EXPECT_LT(four, five);
}

TEST(Render, ContinuePrompts) {
  EXPECT_EQ(render(pack().select(PromptVariant::Continue, TaskKind::Fidelity)),
            "Give the fidelity rating (in a format like n/10), do not repeat what you "
            "have said.");
  EXPECT_EQ(render(pack().select(PromptVariant::Continue, TaskKind::Alignment))
                .rfind("Give the rating of text-image alignment (in a format like n/5)", 0),
            0u);
}

TEST(Select, BaselineAndMainAesthetics) {
  EXPECT_EQ(pack().select(PromptVariant::Baseline, TaskKind::Aesthetics).body,
            "Briefly analyze the aesthetic elements of this image. Give an aesthetic "
            "score out of 10 like 6/10.");
  const auto& main = pack().select(PromptVariant::Main, TaskKind::Aesthetics).body;
  for (auto key : {"Color harmony", "Color brightness", "Color saturation", "Composition",
                   "Perspective", "Light and shadow", "Detailed expression",
                   "Vivid posture", "Visual impact"}) {
    EXPECT_NE(main.find(key), std::string::npos) << key;
  }
  EXPECT_NE(main.find("Overall aesthetic score (e.g., 6/10)"), std::string::npos);
}

TEST(Select, UnknownVariantText) {
  EXPECT_FALSE(variant_from_string("fancy"));
  EXPECT_EQ(variant_from_string("noformat"), PromptVariant::NoFormat);
}

TEST(PromptPack, CriteriaBandsAppearOncePerMainTemplate) {
  EXPECT_EQ(count(pack().select(PromptVariant::Main, TaskKind::Fidelity).body, "Unsure (5)"),
            1u);
  EXPECT_EQ(count(pack().select(PromptVariant::Main, TaskKind::Alignment).body,
                  "Has significant discrepancies (2)"),
            1u);
  EXPECT_EQ(count(pack().select(PromptVariant::Main, TaskKind::Aesthetics).body,
                  "Above average (6)"),
            1u);
}

TEST(Render, CaptionRules) {
  const auto& ali = pack().select(PromptVariant::Main, TaskKind::Alignment);
  const auto& fid = pack().select(PromptVariant::Main, TaskKind::Fidelity);
  try {
    render(ali);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingCaption);
  }
  try {
    render(fid, "caption");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnexpectedCaption);
  }
  for (auto v : {PromptVariant::Main, PromptVariant::Baseline, PromptVariant::NoFormat}) {
    EXPECT_TRUE(pack().select(v, TaskKind::Alignment).has_caption_slot());
    EXPECT_FALSE(pack().select(v, TaskKind::Fidelity).has_caption_slot());
  }
}

TEST(Render, IdempotentOnSlotFreeTemplates) {
  for (const auto& t : pack().templates()) {
    if (t.has_caption_slot()) continue;
    const auto once = render(t);
    PromptTemplate again = t;
    again.body = once;
    EXPECT_EQ(render(again), once) << t.id;
  }
}

TEST(Render, DoesNotMutateTemplates) {
  const auto before = pack().select(PromptVariant::Main, TaskKind::Alignment).body;
  render(pack().select(PromptVariant::Main, TaskKind::Alignment), "a dog");
  EXPECT_EQ(pack().select(PromptVariant::Main, TaskKind::Alignment).body, before);
  EXPECT_EQ(pack().digest(), kCanonicalPromptPackSha256);
}

TEST(Identify, FindsTheSourceTemplate) {
  for (const auto& t : pack().templates()) {
    const auto text = t.has_caption_slot() ? render(t, "a red bicycle") : render(t);
    const auto* found = pack().identify(text);
    ASSERT_NE(found, nullptr) << t.id;
    EXPECT_EQ(found->id, t.id);
  }
  EXPECT_EQ(pack().identify("hello"), nullptr);
}

TEST(PromptPackParse, RejectsBrokenPacks) {
  auto expect_invalid = [](const std::string& doc) {
    try {
      PromptSet::parse(doc);
      FAIL() << doc.substr(0, 60);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::InvalidPromptPack);
    }
  };
  expect_invalid("");
  expect_invalid("### template id=x task=fidelity variant=main\nbody\n### end\n");
  std::string doc(assets::prompt_pack());
  expect_invalid(doc + "\n### template id=fidelity.main task=fidelity variant=main\nx\n### end\n");
  // Removing the caption slot from the alignment template breaks the pack.
  auto no_slot = doc;
  no_slot.replace(no_slot.find(kCaptionSlot), kCaptionSlot.size(), "caption");
  expect_invalid(no_slot);
}

TEST(PromptPackParse, CrLfIsNormalised) {
  std::string doc(assets::prompt_pack());
  std::string crlf;
  for (char c : doc) {
    if (c == '\n') crlf += '\r';
    crlf += c;
  }
  const auto set = PromptSet::parse(crlf);
  for (auto task : kAllTasks) {
    EXPECT_EQ(set.select(PromptVariant::Main, task).body,
              pack().select(PromptVariant::Main, task).body);
  }
  EXPECT_NE(set.digest(), pack().digest());
}

}  // namespace
}  // namespace xiqe
