#include "fixtures.hpp"

#include "icleval/error.hpp"

#include <doctest.h>

#include <set>

using namespace icleval;
using namespace icleval::testing;

namespace {

PromptTemplate review_template() {
  PromptTemplate t;
  t.exemplar_format = "Review: {sentence}\nSentiment: {label}";
  t.query_format = "Review: {sentence}\nSentiment:";
  return t;
}

const std::vector<std::string> kSentiment = {"negative", "positive"};

std::string render_text(const PromptTemplate& t, const std::vector<const Exemplar*>& prefix, const Exemplar& q) {
  return render(t, kSentiment, prefix, q).text;
}

}  // namespace

TEST_CASE("zero-shot prompt is the query block alone") {
  const auto q = make_exemplar("q", "good movie", 1);
  const auto p = render(review_template(), kSentiment, {}, q);
  CHECK(p.text == "Review: good movie\nSentiment:");
  CHECK(p.prefix_ids.empty());
  CHECK(p.query_id == "q");
}

TEST_CASE("instruction, blocks and query are joined by the separator") {
  auto t = review_template();
  t.instruction = "Classify.";
  const auto a = make_exemplar("a", "bad", 0);
  const auto b = make_exemplar("b", "fine", 1);
  const auto q = make_exemplar("q", "ok", 1);
  CHECK(render_text(t, {&a, &b}, q) ==
        "Classify.\n\nReview: bad\nSentiment: negative\n\nReview: fine\nSentiment: positive\n\nReview: ok\nSentiment:");
  CHECK(render_text(t, {}, q) == "Classify.\n\nReview: ok\nSentiment:");
}

TEST_CASE("prefix order changes the text") {
  const auto a = make_exemplar("a", "bad", 0);
  const auto b = make_exemplar("b", "fine", 1);
  const auto q = make_exemplar("q", "ok", 1);
  CHECK(render_text(review_template(), {&a, &b}, q) != render_text(review_template(), {&b, &a}, q));
}

TEST_CASE("verbalizer is substituted") {
  const auto a = make_exemplar("a", "great", 1);
  CHECK(render_exemplar_block(review_template(), kSentiment, a).find("positive") != std::string::npos);
}

TEST_CASE("verbalize") {
  const std::vector<std::string> yn = {"no", "yes"};
  const std::vector<std::string> nli = {"entailment", "neutral", "contradiction"};
  CHECK(verbalize(yn, 1) == "yes");
  CHECK(verbalize(nli, 0) == "entailment");
  CHECK_THROWS(verbalize(nli, 3));
  CHECK_THROWS(verbalize(nli, -1));
}

TEST_CASE("unresolvable placeholder is named") {
  PromptTemplate t;
  t.exemplar_format = "{premise} {label}";
  t.query_format = "{premise}";
  const auto q = make_exemplar("q", "x", 0);
  try {
    render(t, kSentiment, {}, q);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("premise") != std::string::npos);
  }
}

TEST_CASE("template validation") {
  const std::vector<std::string> fields = {"sentence"};
  auto t = review_template();
  CHECK_NOTHROW(t.validate(fields));

  auto twice = t;
  twice.exemplar_format = "{sentence} {label} {label}";
  CHECK_THROWS_AS(twice.validate(fields), ConfigError);

  auto missing = t;
  missing.exemplar_format = "{sentence}";
  CHECK_THROWS_AS(missing.validate(fields), ConfigError);

  auto label_in_query = t;
  label_in_query.query_format = "{sentence} {label}";
  CHECK_THROWS_AS(label_in_query.validate(fields), ConfigError);

  auto unknown = t;
  unknown.query_format = "{hypothesis}";
  CHECK_THROWS_AS(unknown.validate(fields), ConfigError);

  auto unclosed = t;
  unclosed.query_format = "{sentence";
  CHECK_THROWS_AS(unclosed.validate(fields), ConfigError);
}

TEST_CASE("doubled braces are literal") {
  PromptTemplate t;
  t.exemplar_format = "{{x}} {sentence} -> {label}";
  t.query_format = "{{ {sentence} }}";
  const auto a = make_exemplar("a", "hi", 0);
  CHECK(render_exemplar_block(t, kSentiment, a) == "{x} hi -> negative");
  CHECK(render_query_block(t, a) == "{ hi }");
}

TEST_CASE("preset templates validate against their field names") {
  const std::vector<std::string> single = {"sentence"};
  const std::vector<std::string> pair = {"premise", "hypothesis"};
  CHECK_NOTHROW(single_text_template().validate(single));
  CHECK_NOTHROW(text_pair_template().validate(pair));
  CHECK(single_text_template().digest() != text_pair_template().digest());
}

TEST_CASE("template file round trip and strict keys") {
  TempDir dir;
  write_file(dir / "t.json",
             R"({"instruction": "Hi", "exemplar_format": "{sentence}={label}", "query_format": "{sentence}=", "separator": "\n"})");
  const auto t = load_template(dir / "t.json");
  CHECK(t.instruction == "Hi");
  CHECK(t.separator == "\n");
  write_file(dir / "bad.json", R"({"exemplar_format": "{label}", "query_format": "", "extra": 1})");
  CHECK_THROWS_AS(load_template(dir / "bad.json"), ConfigError);
}

TEST_CASE("first k blocks are shared with the longer prefix") {
  const auto t = review_template();
  std::vector<Exemplar> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(make_exemplar("e" + std::to_string(i), "text " + std::to_string(i), i % 2));
  const auto q = make_exemplar("q", "query", 0);
  std::vector<const Exemplar*> full;
  for (const auto& x : xs) full.push_back(&x);
  const std::string long_text = render_text(t, full, q);
  for (std::size_t k = 0; k <= xs.size(); ++k) {
    std::string blocks;
    for (std::size_t i = 0; i < k; ++i) blocks += render_exemplar_block(t, kSentiment, xs[i]) + t.separator;
    CHECK(long_text.compare(0, blocks.size(), blocks) == 0);
    const std::vector<const Exemplar*> cut(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(k));
    CHECK(render_text(t, cut, q).compare(0, blocks.size(), blocks) == 0);
  }
}

TEST_CASE("orderings of distinct exemplars render distinctly, even with separator-laden fields") {
  const auto t = review_template();
  std::vector<Exemplar> xs = {
      make_exemplar("a", "x\n\nReview: y", 0),
      make_exemplar("b", "y\nSentiment: negative\n\nReview: x", 1),
      make_exemplar("c", "\n\n", 0),
      make_exemplar("d", "Review: ", 1),
  };
  const auto q = make_exemplar("q", "z", 0);
  std::vector<int> order = {0, 1, 2, 3};
  std::set<std::string> texts;
  std::size_t n = 0;
  do {
    std::vector<const Exemplar*> prefix;
    for (int i : order) prefix.push_back(&xs[static_cast<std::size_t>(i)]);
    texts.insert(render_text(t, prefix, q));
    ++n;
  } while (std::next_permutation(order.begin(), order.end()));
  CHECK(texts.size() == n);
}

TEST_CASE("rendering is byte-stable") {
  const auto a = make_exemplar("a", "  trailing  ", 1);
  const auto q = make_exemplar("q", "q ", 0);
  CHECK(render_text(review_template(), {&a}, q) == render_text(review_template(), {&a}, q));
  CHECK(render_text(review_template(), {&a}, q).find("  trailing  ") != std::string::npos);
}
