#include <map>

#include <benchmark/benchmark.h>

#include "gestimate/gest.hpp"
#include "gestimate/sim.hpp"
#include "gestimate/survival.hpp"

using namespace gestimate;

namespace {

const Generated& seq_data(std::size_t n) {
  static std::map<std::size_t, Generated> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, generate(make_scenario("seq-confounded"), n, 1)).first;
  return it->second;
}

BlipSpec seq_blip(const Panel& p, Link link = Link::identity) {
  auto s = p.symbols();
  auto term = [&](int m, const char* e, int j) { return BlipTerm{2, m, Expression::parse(e, s), j}; };
  return BlipSpec(link,
                  {term(1, "A", 0), term(1, "L*A", 1), term(1, "A[0]*A", 2), term(0, "A", 3), term(0, "L*A", 4)}, 5);
}

void BM_generate(benchmark::State& st) {
  Scenario s = make_scenario("seq-confounded");
  for (auto _ : st) benchmark::DoNotOptimize(generate(s, st.range(0), 7));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_generate)->Arg(1000)->Arg(10000);

void BM_propensity(benchmark::State& st) {
  const Panel& p = seq_data(st.range(0)).panel;
  auto fm = FeatureMap::parse_per_time({{"1", "L"}, {"1", "L", "A[0]"}}, p.symbols());
  for (auto _ : st) benchmark::DoNotOptimize(fit_propensity(p, fm));
}
BENCHMARK(BM_propensity)->Arg(1000)->Arg(10000);

void BM_snmm(benchmark::State& st) {
  const Panel& p = seq_data(st.range(0)).panel;
  auto sym = p.symbols();
  auto spec = seq_blip(p, st.range(1) ? Link::log : Link::identity);
  auto prop = fit_propensity(p, FeatureMap::parse_per_time({{"1", "L"}, {"1", "L", "A[0]"}}, sym));
  OutcomeModel out{FeatureMap::parse_per_time({{"1", "L"}, {"1", "L", "A[0]", "L[0]", "L[0]*A[0]"}}, sym), false};
  for (auto _ : st) benchmark::DoNotOptimize(gest_snmm(p, spec, prop, out));
}
BENCHMARK(BM_snmm)->Args({1000, 0})->Args({10000, 0})->Args({1000, 1})->Unit(benchmark::kMillisecond);

void BM_saftm_statistic(benchmark::State& st) {
  Scenario s = make_scenario("saftm-confounded");
  Generated g = generate(s, st.range(0), 3);
  const Panel& p = g.panel;
  SaftmSpec spec({SaftmTerm{-1, Expression::parse("A", p.symbols()), 0}}, 1);
  auto prop = fit_propensity(p, FeatureMap::parse_per_time({{"1", "L[0]"}, {"1", "L[1]"}}, p.symbols()));
  OutcomeModel out{FeatureMap::parse({"1", "L"}, p.symbols()), false};
  for (auto _ : st) benchmark::DoNotOptimize(saftm_statistic(p, spec, prop, out, s.psi));
}
BENCHMARK(BM_saftm_statistic)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_monte_carlo(benchmark::State& st) {
  Scenario s = make_scenario("point-confounded");
  EstimatorSpec e{"gest", [](const Generated& g) {
                    auto sym = g.panel.symbols();
                    auto fm = FeatureMap::parse({"1", "L"}, sym);
                    BlipSpec spec(Link::identity, {BlipTerm{1, 0, Expression::parse("A", sym), 0}}, 1);
                    return gest_smm(g.panel, spec, fit_propensity(g.panel, fm), OutcomeModel{fm, false});
                  },
                  {}};
  for (auto _ : st) benchmark::DoNotOptimize(monte_carlo(s, {e}, 1000, 50, 11, static_cast<int>(st.range(0))));
}
BENCHMARK(BM_monte_carlo)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
