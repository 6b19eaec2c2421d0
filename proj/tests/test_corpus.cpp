#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sensekit/corpus.hpp"

using namespace sensekit;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "sensekit_corpus_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string record_line(const std::string& id, std::vector<std::string> cited = {},
                        const std::string& abstract = "some abstract") {
  nlohmann::json j;
  j["paper_id"] = id;
  j["title"] = "Title of " + id;
  j["abstract"] = abstract;
  j["body"] = "";
  j["cited_ids"] = cited;
  j["metadata"] = {{"venue", "demo"}};
  return j.dump();
}

}  // namespace

TEST_CASE("load_corpus reads well-formed lines and tallies malformed ones") {
  SECTION("three well-formed lines") {
    auto path = temp_file("three.jsonl");
    std::ofstream out(path);
    out << record_line("A") << "\n" << record_line("B") << "\n"
        << record_line("C") << "\n";
    out.close();
    auto result = corpus::load_corpus(path);
    CHECK(result.records.size() == 3);
    CHECK(result.skipped.empty());
  }
  SECTION("malformed line is skipped with its line number") {
    auto path = temp_file("malformed.jsonl");
    std::ofstream out(path);
    out << record_line("A") << "\n"
        << "{this is not json\n"
        << record_line("B") << "\n";
    out.close();
    auto result = corpus::load_corpus(path);
    CHECK(result.records.size() == 2);
    REQUIRE(result.skipped.size() == 1);
    CHECK(result.skipped[0].line_number == 2);
  }
  SECTION("missing or empty paper_id is malformed") {
    auto path = temp_file("badid.jsonl");
    std::ofstream out(path);
    out << "{\"title\": \"no id\"}\n" << "{\"paper_id\": \"\"}\n";
    out.close();
    auto result = corpus::load_corpus(path);
    CHECK(result.records.empty());
    CHECK(result.skipped.size() == 2);
  }
  SECTION("unreadable path is fatal") {
    CHECK_THROWS_AS(corpus::load_corpus("/nonexistent/nope.jsonl"), IoError);
  }
  SECTION("cited ids are deduplicated and never self-referential") {
    auto path = temp_file("cited.jsonl");
    std::ofstream out(path);
    out << record_line("A", {"B", "B", "A", "C"}) << "\n";
    out.close();
    auto result = corpus::load_corpus(path);
    REQUIRE(result.records.size() == 1);
    CHECK(result.records[0].cited_ids == std::vector<std::string>{"B", "C"});
  }
  SECTION("1000-record fixture round-trips with cited order preserved") {
    auto path = temp_file("big.jsonl");
    {
      std::ofstream out(path);
      for (int i = 0; i < 1000; ++i) {
        out << record_line("P" + std::to_string(i),
                           {"P" + std::to_string((i + 1) % 1000),
                            "P" + std::to_string((i + 7) % 1000)})
            << "\n";
      }
    }
    // Independent line count.
    std::ifstream in(path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line))
      if (!line.empty()) ++lines;
    REQUIRE(lines == 1000);

    auto result = corpus::load_corpus(path);
    CHECK(result.records.size() == 1000);
    CHECK(result.skipped.empty());
    CHECK(result.records[3].cited_ids ==
          std::vector<std::string>{"P4", "P10"});

    auto limited = corpus::load_corpus(path, 10);
    CHECK(limited.records.size() == 10);
  }
}

TEST_CASE("citation neighborhoods") {
  std::vector<corpus::PaperRecord> records;
  auto add = [&](const std::string& id, std::vector<std::string> cited) {
    corpus::PaperRecord rec;
    rec.paper_id = id;
    rec.abstract_text = "abstract " + id;
    rec.cited_ids = std::move(cited);
    records.push_back(std::move(rec));
  };
  add("T1", {"A", "B"});
  add("T2", {});
  add("T3", {"A", "B", "C"});
  add("A", {});
  add("B", {});
  corpus::CorpusIndex index(records);

  SECTION("all cited present") {
    auto hood = corpus::build_neighborhood(index, "T1");
    CHECK(hood.size() == 2);
    CHECK(hood.missing.empty());
    CHECK(hood.cited[0].paper_id == "A");
  }
  SECTION("empty citation list") {
    auto hood = corpus::build_neighborhood(index, "T2");
    CHECK(hood.size() == 0);
    CHECK(hood.missing.empty());
  }
  SECTION("unresolvable citations are reported, not fatal") {
    // Separate corpus where only A of {A, B, C} resolves.
    std::vector<corpus::PaperRecord> sparse(2);
    sparse[0].paper_id = "T";
    sparse[0].cited_ids = {"A", "B", "C"};
    sparse[1].paper_id = "A";
    corpus::CorpusIndex sparse_index(sparse);
    auto hood = corpus::build_neighborhood(sparse_index, "T");
    CHECK(hood.size() == 1);
    // Set-difference oracle: cited_ids minus corpus ids.
    CHECK(hood.missing == std::vector<std::string>{"B", "C"});
  }
  SECTION("unknown target") {
    CHECK_THROWS_AS(corpus::build_neighborhood(index, "nope"), NotFoundError);
  }
  SECTION("size + missing always partitions cited_ids") {
    for (const auto& id : index.ids()) {
      auto hood = corpus::build_neighborhood(index, id);
      CHECK(hood.size() + hood.missing.size() == index.at(id).cited_ids.size());
    }
  }
}

TEST_CASE("duplicate paper ids keep the first record") {
  std::vector<corpus::PaperRecord> records(3);
  records[0].paper_id = "X";
  records[0].title = "first";
  records[1].paper_id = "X";
  records[1].title = "second";
  records[2].paper_id = "Y";
  corpus::CorpusIndex index(records);
  CHECK(index.size() == 2);
  CHECK(index.duplicates().size() == 1);
  CHECK(index.at("X").title == "first");
}

TEST_CASE("assign_splits") {
  auto ids_of = [](int n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("P" + std::to_string(i));
    return ids;
  };
  auto count = [](const std::vector<corpus::SplitAssignment>& a, corpus::Split s) {
    std::size_t c = 0;
    for (const auto& x : a)
      if (x.split == s) ++c;
    return c;
  };

  SECTION("10 ids at (0.8, 0.1, 0.1) go 8/1/1") {
    auto splits = corpus::assign_splits(ids_of(10), {0.8, 0.1, 0.1}, 7);
    CHECK(count(splits, corpus::Split::Train) == 8);
    CHECK(count(splits, corpus::Split::Validation) == 1);
    CHECK(count(splits, corpus::Split::Test) == 1);
  }
  SECTION("re-running yields the identical assignment") {
    auto a = corpus::assign_splits(ids_of(100), {0.8, 0.1, 0.1}, 7);
    auto b = corpus::assign_splits(ids_of(100), {0.8, 0.1, 0.1}, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].paper_id == b[i].paper_id);
      CHECK(a[i].split == b[i].split);
    }
  }
  SECTION("1000 ids at (5/6, 1/12, 1/12): remainder goes to train") {
    auto splits =
        corpus::assign_splits(ids_of(1000), {5.0 / 6.0, 1.0 / 12.0, 1.0 / 12.0}, 3);
    CHECK(count(splits, corpus::Split::Train) == 834);
    CHECK(count(splits, corpus::Split::Validation) == 83);
    CHECK(count(splits, corpus::Split::Test) == 83);
  }
  SECTION("input permutation does not change the assignment") {
    auto ids = ids_of(50);
    auto a = corpus::assign_splits(ids, {0.8, 0.1, 0.1}, 9);
    std::mt19937 rng(1);
    std::shuffle(ids.begin(), ids.end(), rng);
    auto b = corpus::assign_splits(ids, {0.8, 0.1, 0.1}, 9);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].paper_id == b[i].paper_id);
      CHECK(a[i].split == b[i].split);
    }
  }
  SECTION("every id lands in exactly one split") {
    auto splits = corpus::assign_splits(ids_of(37), {0.6, 0.2, 0.2}, 5);
    std::set<std::string> seen;
    for (const auto& s : splits) CHECK(seen.insert(s.paper_id).second);
    CHECK(seen.size() == 37);
  }
  SECTION("invalid ratios are rejected") {
    CHECK_THROWS_AS(corpus::assign_splits(ids_of(5), {0.5, 0.5, 0.5}, 1),
                    ArgumentError);
    CHECK_THROWS_AS(corpus::assign_splits(ids_of(5), {1.0, 0.0, 0.0}, 1),
                    ArgumentError);
  }
  SECTION("empty ids give an empty result") {
    CHECK(corpus::assign_splits({}, {0.8, 0.1, 0.1}, 1).empty());
  }
}

TEST_CASE("compute_stats") {
  auto row = [](const std::string& id, corpus::Mode mode, const std::string& traj,
                std::size_t hood) {
    corpus::DatasetRow r;
    r.paper_id = id;
    r.mode = mode;
    r.trajectory = traj;
    r.neighborhood_size = hood;
    return r;
  };

  SECTION("single record") {
    std::vector<corpus::DatasetRow> rows{
        row("A", corpus::Mode::Target,
            "one two three four five six seven [[R1]] [[R2]] [[R3]]", 4)};
    // 10 tokens, 3 unique cited refs.
    auto stats = corpus::compute_stats(rows);
    CHECK(stats.total.avg_length_tokens == 10.0);
    CHECK(stats.total.avg_cited_refs == 3.0);
    CHECK(stats.total.avg_citation_neighborhood == 4.0);
    CHECK(stats.counts[0][0] == 1);
  }
  SECTION("two records average") {
    std::vector<corpus::DatasetRow> rows{
        row("A", corpus::Mode::Target, "a b c d e f g h i j", 0),
        row("B", corpus::Mode::Infer,
            "a b c d e f g h i j k l m n o p q r s t", 0)};
    auto stats = corpus::compute_stats(rows);
    CHECK(stats.total.avg_length_tokens == 15.0);
    CHECK(stats.per_mode[0].avg_length_tokens == 10.0);
    CHECK(stats.per_mode[1].avg_length_tokens == 20.0);
  }
  SECTION("empty dataset is an error") {
    CHECK_THROWS_AS(corpus::compute_stats({}), ArgumentError);
  }
  SECTION("50-record fixture matches an independent naive pass exactly") {
    std::mt19937 rng(23);
    std::vector<corpus::DatasetRow> rows;
    for (int i = 0; i < 50; ++i) {
      std::ostringstream traj;
      const int words = 1 + static_cast<int>(rng() % 60);
      for (int w = 0; w < words; ++w) {
        if (rng() % 7 == 0) traj << "[[R" << rng() % 6 << "]] ";
        else traj << "w" << rng() % 40 << ' ';
      }
      rows.push_back(row("P" + std::to_string(i),
                         rng() % 2 ? corpus::Mode::Infer : corpus::Mode::Target,
                         traj.str(), rng() % 12));
    }
    auto stats = corpus::compute_stats(rows);

    // Naive second pass.
    double tokens = 0.0, refs = 0.0, hood = 0.0;
    for (const auto& r : rows) {
      std::istringstream in(r.trajectory);
      std::string tok;
      std::set<std::string> unique;
      double tk = 0.0;
      while (in >> tok) {
        ++tk;
        if (tok.rfind("[[", 0) == 0 && tok.size() > 4) unique.insert(tok);
      }
      tokens += tk;
      refs += static_cast<double>(unique.size());
      hood += static_cast<double>(r.neighborhood_size);
    }
    CHECK(stats.total.avg_length_tokens == Catch::Approx(tokens / 50.0).margin(1e-9));
    CHECK(stats.total.avg_cited_refs == Catch::Approx(refs / 50.0).margin(1e-9));
    CHECK(stats.total.avg_citation_neighborhood ==
          Catch::Approx(hood / 50.0).margin(1e-9));
  }
  SECTION("permutation invariance is exact") {
    std::mt19937 rng(29);
    std::vector<corpus::DatasetRow> rows;
    for (int i = 0; i < 20; ++i)
      rows.push_back(row("P" + std::to_string(i),
                         rng() % 2 ? corpus::Mode::Infer : corpus::Mode::Target,
                         "tok tok tok [[R1]]", rng() % 5));
    auto a = corpus::compute_stats(rows);
    std::shuffle(rows.begin(), rows.end(), rng);
    auto b = corpus::compute_stats(rows);
    CHECK(a.total.avg_length_tokens == b.total.avg_length_tokens);
    CHECK(a.total.avg_cited_refs == b.total.avg_cited_refs);
    CHECK(a.total.avg_citation_neighborhood == b.total.avg_citation_neighborhood);
  }
}
