#include <sstream>

#include "doctest.h"
#include "gestimate/error.hpp"
#include "gestimate/panel.hpp"

using namespace gestimate;

namespace {

const char* two_subjects =
    "subject_id,time_index,A,Y,L\n"
    "s1,0,1,,0.5\n"
    "s1,1,0,2.0,-1.0\n"
    "s1,2,,3.5,\n"
    "s2,0,0,,1.5\n"
    "s2,1,1,1.0,0.25\n"
    "s2,2,,4.0,\n";

Panel read(const std::string& text, PanelSchema schema = {}) {
  std::istringstream in(text);
  return read_panel(in, schema);
}

}  // namespace

TEST_SUITE("panel") {
  TEST_CASE("long csv is assembled per subject") {
    Panel p = read(two_subjects);
    CHECK(p.K() == 1);
    REQUIRE(p.n() == 2);
    const auto& s = p.subject(p.index_of("s2"));
    CHECK(s.a == std::vector<double>{0.0, 1.0});
    CHECK(s.l[1][0] == 0.25);
    CHECK(s.y[1] == 1.0);
    CHECK(s.y[2] == 4.0);
    CHECK(p.outcome_times() == std::vector<int>{1, 2});
    CHECK(p.binary_treatment());
    CHECK(p.covariate_names() == std::vector<std::string>{"L"});
  }

  TEST_CASE("bad files raise data errors") {
    std::string missing_a = two_subjects;
    missing_a.replace(missing_a.find("s2,1,1"), 6, "s2,1,");
    CHECK_THROWS_AS(read(missing_a), DataError);
    CHECK_THROWS_AS(read(std::string(two_subjects) + "s2,1,1,1.0,0.25\n"), DataError);
    CHECK_THROWS_AS(read(std::string(two_subjects) + "s3,0,1,,1\ns3,2,,1,\n"), DataError);
    CHECK_THROWS_AS(read("subject_id,time_index,A,Y,L\ns1,0,x,,1\ns1,1,0,1,1\n"), DataError);
    CHECK_THROWS_AS(read("subject_id,time_index,A,L\ns1,0,1,1\n"), DataError);
    CHECK_THROWS_AS(read(""), DataError);
    std::string no_outcome = two_subjects;
    no_outcome.replace(no_outcome.find("s1,2,,3.5"), 9, "s1,2,,");
    CHECK_THROWS_AS(read(no_outcome), DataError);
  }

  TEST_CASE("history views hide the future") {
    Panel p = read(two_subjects);
    HistoryView h = history_view(p, "s1", 0);
    CHECK(h.treatment(0) == 1.0);
    CHECK(h.covariate(0, 0) == 0.5);
    CHECK_THROWS_AS(h.treatment(1), DataError);
    CHECK_THROWS_AS(h.covariate(0, 1), DataError);
    CHECK_THROWS_AS(h.without_current_treatment().treatment(0), DataError);
    CHECK(h.with_treatment(0, 0.0).treatment(0) == 0.0);

    HistoryView h1 = history_view(p, "s1", 1);
    CHECK(h1.abar() == std::vector<double>{1.0, 0.0});
    CHECK(h1.lbar().size() == 2);
    const double path[] = {0.0, 1.0};
    HistoryView cf = HistoryView::counterfactual(p, p.subject(0), 1, path);
    CHECK(cf.treatment(0) == 0.0);
    CHECK(cf.treatment(1) == 1.0);
    CHECK_THROWS_AS(history_view(p, "nobody", 0), DataError);
    CHECK_THROWS_AS(history_view(p, "s1", 2), DataError);
  }

  TEST_CASE("write then read reproduces the panel") {
    Panel p = read(two_subjects);
    std::ostringstream out;
    write_panel(out, p);
    Panel q = read(out.str());
    REQUIRE(q.n() == p.n());
    for (std::size_t i = 0; i < p.n(); ++i) {
      CHECK(q.subject(i).a == p.subject(i).a);
      CHECK(q.subject(i).l == p.subject(i).l);
      CHECK(q.subject(i).y[1] == p.subject(i).y[1]);
      CHECK(q.subject(i).y[2] == p.subject(i).y[2]);
    }
  }

  TEST_CASE("survival panels keep only the risk set") {
    PanelSchema schema;
    schema.survival = true;
    const char* text =
        "subject_id,time_index,A,L,event_time,censor_time,event_observed\n"
        "a,0,1,0.1,1.5,3,1\n"
        "a,1,0,0.2,1.5,3,1\n"
        "a,2,1,0.3,1.5,3,1\n"
        "b,0,0,0.4,,3,0\n"
        "b,1,1,0.5,,3,0\n"
        "b,2,1,0.6,,3,0\n";
    Panel p = read(text, schema);
    CHECK(p.K() == 2);
    CHECK(p.subject(0).a.size() == 2);
    CHECK(p.subject(1).a.size() == 3);
    CHECK(p.subject(0).follow_up() == 1.5);
    CHECK(p.subject(1).follow_up() == 3.0);
    CHECK_THROWS_AS(history_view(p, "a", 2), DataError);
  }
}
