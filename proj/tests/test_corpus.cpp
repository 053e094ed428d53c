#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include <fmt/format.h>

#include "agentrec/corpus.hpp"
#include "support.hpp"

using namespace agentrec;
using agentrec::testing::fixture;
using agentrec::testing::TempDir;

namespace {

void write_file(const std::string& path, const std::string& text) {
    std::ofstream(path) << text;
}

std::size_t count_nonblank_lines(const std::string& path) {
    std::ifstream in(path);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += line.find_first_not_of(" \t\r") != std::string::npos;
    return n;
}

Interaction x(const std::string& u, const std::string& i, double r, std::int64_t t) {
    return {UserId(u), ItemId(i), r, t};
}

}  // namespace

TEST(LoadInteractions, MovieLensLineMapsFieldByField) {
    TempDir dir;
    write_file(dir.file("r.dat"), "1::1193::5::978300760\n");
    auto data = load_interactions(DatasetFormat::movielens, {dir.file("r.dat"), "", ""});
    ASSERT_EQ(data.interactions.size(), 1u);
    const auto& it = data.interactions[0];
    EXPECT_EQ(it.user, UserId("1"));
    EXPECT_EQ(it.item, ItemId("1193"));
    EXPECT_EQ(it.rating, 5.0);
    EXPECT_EQ(it.timestamp, 978300760);
}

TEST(LoadInteractions, EmptyFileHasZeroValidRecords) {
    TempDir dir;
    write_file(dir.file("r.dat"), "");
    try {
        load_interactions(DatasetFormat::movielens, {dir.file("r.dat"), "", ""});
        FAIL() << "expected CorpusError";
    } catch (const CorpusError& e) {
        EXPECT_NE(std::string(e.what()).find("zero valid records"), std::string::npos);
    }
}

TEST(LoadInteractions, MalformedLinesAreCountedNotFatal) {
    TempDir dir;
    write_file(dir.file("r.dat"),
               "1::10::5::100\n"
               "garbage\n"
               "1::11::9::100\n"     // outside the rating scale
               "1::12::4::-5\n"      // negative timestamp
               "2::10::four::100\n"
               "2::13::4::200\n");
    auto data = load_interactions(DatasetFormat::movielens, {dir.file("r.dat"), "", ""});
    EXPECT_EQ(data.interactions.size(), 2u);
    EXPECT_EQ(data.malformed_lines, 4u);
}

TEST(LoadInteractions, UnreadableFileAndUnknownFormat) {
    EXPECT_THROW(load_interactions(DatasetFormat::movielens, {"/nonexistent/ratings.dat", "", ""}), CorpusError);
    EXPECT_THROW(parse_format("netflix"), CorpusError);
    EXPECT_EQ(parse_format("amazon"), DatasetFormat::amazon);
}

TEST(LoadInteractions, RecordCountEqualsLineCount) {
    const auto path = fixture("table1/cds_sparse/reviews.jsonl");
    auto data = load_interactions(DatasetFormat::amazon, {path, fixture("table1/cds_sparse/meta.jsonl"), ""});
    EXPECT_EQ(data.interactions.size(), count_nonblank_lines(path));
    EXPECT_EQ(data.interactions.size(), 800u);
    EXPECT_EQ(data.malformed_lines, 0u);
}

TEST(LoadInteractions, MovieLensMetadataAndDemographics) {
    auto data = load_interactions(DatasetFormat::movielens,
                                  {fixture("ml20/ratings.dat"), fixture("ml20/movies.dat"), fixture("ml20/users.dat")});
    const auto& film = data.catalog.at(ItemId("3"));
    EXPECT_EQ(film.title, "Film 3 (1983)");
    EXPECT_EQ(film.year, "1983");
    EXPECT_EQ(film.categories, (std::vector<std::string>{"Animation", "Documentary"}));
    const auto& demo = data.demographics.at(UserId("1"));
    EXPECT_EQ(demo.gender, "female");
    EXPECT_EQ(demo.age, "25-34");
    EXPECT_EQ(demo.occupation, "college/grad student");
}

TEST(LoadInteractions, AmazonKeepsLeafCategoriesAndLinks) {
    TempDir dir;
    write_file(dir.file("r.jsonl"),
               R"({"reviewerID":"A1","asin":"B1","overall":5.0,"unixReviewTime":10})"
               "\n{not json}\n");
    write_file(dir.file("m.jsonl"),
               R"({"asin":"B1","title":"Kind of Blue","brand":"Columbia",)"
               R"("categories":[["CDs & Vinyl","Jazz"],["CDs & Vinyl","Cool Jazz"]],)"
               R"("related":{"also_bought":["B2"],"also_viewed":["B3"]}})"
               "\n");
    auto data = load_interactions(DatasetFormat::amazon, {dir.file("r.jsonl"), dir.file("m.jsonl"), ""});
    EXPECT_EQ(data.interactions.size(), 1u);
    EXPECT_EQ(data.malformed_lines, 1u);
    const auto& meta = data.catalog.at(ItemId("B1"));
    EXPECT_EQ(meta.categories, (std::vector<std::string>{"Cool Jazz", "Jazz"}));
    EXPECT_EQ(meta.brand, "Columbia");
    EXPECT_EQ(meta.also_bought, std::vector<ItemId>{ItemId("B2")});
    EXPECT_EQ(meta.also_viewed, std::vector<ItemId>{ItemId("B3")});
}

TEST(BuildSequences, KeepsOnlyRatingsAboveThreshold) {
    std::vector<Interaction> in{x("u", "a", 5, 1), x("u", "b", 3, 2), x("u", "c", 4, 3)};
    auto seqs = build_sequences(in, 3.0);
    ASSERT_EQ(seqs.size(), 1u);
    std::vector<double> ratings;
    for (const auto& e : seqs.at(UserId("u")).items) ratings.push_back(e.rating);
    EXPECT_EQ(ratings, (std::vector<double>{5, 4}));
}

TEST(BuildSequences, BoundaryIsStrict) {
    std::vector<Interaction> in{x("u", "a", 3, 1), x("u", "b", 3, 2), x("v", "a", 4, 1)};
    auto seqs = build_sequences(in, 3.0);
    EXPECT_FALSE(seqs.contains(UserId("u")));
    EXPECT_TRUE(seqs.contains(UserId("v")));
}

TEST(BuildSequences, SortsByTimeAndKeepsInputOrderOnTies) {
    std::vector<Interaction> in{x("u", "late", 5, 30), x("u", "tie1", 5, 10), x("u", "early", 5, 5),
                                x("u", "tie2", 5, 10)};
    auto seqs = build_sequences(in);
    EXPECT_EQ(seqs.at(UserId("u")).item_ids(),
              (std::vector<ItemId>{ItemId("early"), ItemId("tie1"), ItemId("tie2"), ItemId("late")}));
}

TEST(BuildSequences, ChronologyHoldsOnFixtures) {
    for (const char* name : {"table1/ml_dense", "table1/ml_sparse"}) {
        auto data = load_interactions(DatasetFormat::movielens,
                                      {fixture(std::string(name) + "/ratings.dat"), "", ""});
        for (const auto& [user, seq] : build_sequences(data.interactions)) {
            for (std::size_t i = 1; i < seq.items.size(); ++i) {
                ASSERT_LE(seq.items[i - 1].timestamp, seq.items[i].timestamp) << user.str();
            }
        }
    }
}

TEST(LeaveOneOut, LastIsTestSecondToLastIsValidation) {
    SequenceMap seqs;
    seqs[UserId("u")] = {UserId("u"), {{ItemId("a"), 5, 1}, {ItemId("b"), 5, 2}, {ItemId("c"), 5, 3}, {ItemId("d"), 5, 4}}};
    auto split = leave_one_out_split(seqs);
    ASSERT_EQ(split.cases.size(), 2u);
    const auto& valid = split.cases[0];
    const auto& test = split.cases[1];
    EXPECT_EQ(valid.role, SplitRole::validation);
    EXPECT_EQ(valid.held_out, ItemId("c"));
    EXPECT_EQ(valid.train_prefix.item_ids(), (std::vector<ItemId>{ItemId("a"), ItemId("b")}));
    EXPECT_EQ(test.role, SplitRole::test);
    EXPECT_EQ(test.held_out, ItemId("d"));
    EXPECT_EQ(test.train_prefix.item_ids(), (std::vector<ItemId>{ItemId("a"), ItemId("b"), ItemId("c")}));
}

TEST(LeaveOneOut, ShortSequencesAreSkippedAndReported) {
    SequenceMap seqs;
    seqs[UserId("u")] = {UserId("u"), {{ItemId("a"), 5, 1}, {ItemId("b"), 5, 2}}};
    auto split = leave_one_out_split(seqs);
    EXPECT_TRUE(split.cases.empty());
    EXPECT_EQ(split.skipped, std::vector<UserId>{UserId("u")});
}

TEST(LeaveOneOut, OneTestCasePerEligibleUser) {
    auto data = load_interactions(DatasetFormat::movielens, {fixture("table1/ml_dense/ratings.dat"), "", ""});
    auto seqs = build_sequences(data.interactions);
    std::size_t eligible = 0;
    for (const auto& [_, s] : seqs) eligible += s.items.size() >= 3;
    auto split = leave_one_out_split(seqs);
    std::size_t tests = 0;
    for (const auto& c : split.cases) {
        tests += c.role == SplitRole::test;
        auto prefix = c.train_prefix.item_ids();
        EXPECT_EQ(std::find(prefix.begin(), prefix.end(), c.held_out), prefix.end()) << c.case_id;
    }
    EXPECT_EQ(eligible, 100u);
    EXPECT_EQ(tests, eligible);
}

TEST(SampleCandidates, TenDistinctWithOnePositive) {
    const auto& p = agentrec::testing::ml20();
    for (const auto& c : p.candidates) {
        ASSERT_EQ(c.candidates.size(), 10u);
        std::set<ItemId> distinct(c.candidates.begin(), c.candidates.end());
        EXPECT_EQ(distinct.size(), 10u);
    }
}

TEST(SampleCandidates, DeterministicInSeed) {
    auto data = load_interactions(DatasetFormat::movielens, {fixture("ml20/ratings.dat"), "", ""});
    auto seqs = build_sequences(data.interactions);
    auto split = leave_one_out_split(seqs);
    auto universe = item_universe(data.interactions);
    const auto& c = split.cases.front();
    const auto& hist = seqs.at(c.user);
    EXPECT_EQ(sample_candidates(c, hist, universe, 9, 42), sample_candidates(c, hist, universe, 9, 42));
    EXPECT_NE(sample_candidates(c, hist, universe, 9, 42).candidates,
              sample_candidates(c, hist, universe, 9, 43).candidates);
}

TEST(SampleCandidates, NegativesNeverTouchPositiveHistory) {
    auto data = load_interactions(DatasetFormat::movielens, {fixture("ml20/ratings.dat"), "", ""});
    auto seqs = build_sequences(data.interactions);
    auto split = leave_one_out_split(seqs);
    auto universe = item_universe(data.interactions);
    std::size_t sets = 0;
    for (std::uint64_t seed = 0; sets < 1000; ++seed) {
        for (const auto& c : split.cases) {
            if (sets == 1000) break;
            const auto& hist = seqs.at(c.user);
            auto cs = sample_candidates(c, hist, universe, 9, seed);
            ++sets;
            ASSERT_EQ(cs.positive(), c.held_out);
            std::set<ItemId> positives;
            for (const auto& e : hist.items) positives.insert(e.item);
            for (std::size_t i = 0; i < cs.candidates.size(); ++i) {
                if (i == cs.positive_index) continue;
                ASSERT_FALSE(positives.contains(cs.candidates[i])) << c.case_id << " seed " << seed;
            }
        }
    }
}

TEST(SampleCandidates, InsufficientNegatives) {
    SplitCase c{"u:test", UserId("u"), {}, ItemId("a"), SplitRole::test};
    BehaviorSequence hist{UserId("u"), {{ItemId("a"), 5, 1}}};
    std::vector<ItemId> universe{ItemId("a"), ItemId("b"), ItemId("c")};
    try {
        sample_candidates(c, hist, universe, 9, 0);
        FAIL();
    } catch (const CorpusError& e) {
        EXPECT_NE(std::string(e.what()).find("insufficient negatives"), std::string::npos);
    }
}

TEST(SampleCandidates, JsonRoundTrip) {
    const auto& c = agentrec::testing::ml20().candidates.front();
    EXPECT_EQ(json(c).get<CandidateSet>(), c);
}

TEST(DatasetStats, SingleInteractionIsFullyDense) {
    std::vector<Interaction> in{x("u", "i", 5, 0)};
    auto s = dataset_stats(in);
    EXPECT_EQ(s.sparsity, 0.0);
    EXPECT_EQ(s.inters_per_user, 1.0);
    EXPECT_THROW(dataset_stats(std::span<const Interaction>{}), CorpusError);
}

TEST(DatasetStats, RatiosFollowFromCounts) {
    auto data = load_interactions(DatasetFormat::amazon, {fixture("amazon_small/reviews.jsonl"), "", ""});
    auto s = dataset_stats(data.interactions);
    const double n = static_cast<double>(s.n_interactions);
    EXPECT_NEAR(s.sparsity, 1.0 - n / (double(s.n_users) * double(s.n_items)), 1e-4);
    EXPECT_DOUBLE_EQ(s.inters_per_user, n / double(s.n_users));
    EXPECT_DOUBLE_EQ(s.inters_per_item, n / double(s.n_items));
}

TEST(DatasetStats, TableSubsetsMatchPublishedCounts) {
    auto expected = json::parse(std::ifstream(fixture("table1/expected.json")));
    for (const auto& [name, row] : expected.items()) {
        auto format = parse_format(row["format"].get<std::string>());
        const auto dir = fixture("table1/" + name);
        DatasetPaths paths = format == DatasetFormat::movielens
                                 ? DatasetPaths{dir + "/ratings.dat", dir + "/movies.dat", dir + "/users.dat"}
                                 : DatasetPaths{dir + "/reviews.jsonl", dir + "/meta.jsonl", ""};
        auto data = load_interactions(format, paths);
        auto positives = flatten(build_sequences(data.interactions));
        auto s = dataset_stats(positives);
        EXPECT_EQ(s.n_users, row["users"].get<std::size_t>()) << name;
        EXPECT_EQ(s.n_items, row["items"].get<std::size_t>()) << name;
        EXPECT_EQ(s.n_interactions, row["interactions"].get<std::size_t>()) << name;
        EXPECT_EQ(fmt::format("{:.2f}", s.inters_per_user), row["inters_per_user"]) << name;
        EXPECT_EQ(fmt::format("{:.2f}", s.inters_per_item), row["inters_per_item"]) << name;
        EXPECT_EQ(fmt::format("{:.2f}%", 100 * s.sparsity), row["sparsity"]) << name;
    }
}

TEST(Corpus, PipelineIsBitIdenticalAcrossRuns) {
    auto a = agentrec::testing::build_pipeline(agentrec::testing::ml20_config());
    auto b = agentrec::testing::build_pipeline(agentrec::testing::ml20_config());
    EXPECT_EQ(a.candidates, b.candidates);
    EXPECT_EQ(a.corpus.sequences, b.corpus.sequences);
}
