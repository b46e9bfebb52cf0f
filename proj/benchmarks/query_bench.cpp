#include <benchmark/benchmark.h>

#include <filesystem>
#include <memory>
#include <unistd.h>

#include "pmuidx/query.hpp"

namespace {

namespace fs = std::filesystem;

// One 200k-row archive shared by every query benchmark, warm cache.
class Fixture {
 public:
  Fixture()
      : dir_(fs::temp_directory_path() / ("pmuidx-bench-" + std::to_string(::getpid()))),
        archive_(pmuidx::build_table2_archive(dir_, pmuidx::EngineConfig::defaults(), 200'000, 7)) {}
  ~Fixture() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  const pmuidx::Archive& archive() const { return archive_; }

 private:
  fs::path dir_;
  pmuidx::Archive archive_;
};

const pmuidx::Archive& shared_archive() {
  static Fixture f;
  return f.archive();
}

void run_query(benchmark::State& state, bool linear) {
  const auto suite = pmuidx::table2_suite();
  const auto& q = suite.at(static_cast<std::size_t>(state.range(0)));
  const auto& archive = shared_archive();
  const auto p = pmuidx::parse_query(q.text, &archive.index().layout());
  for (auto _ : state) {
    auto r = linear ? pmuidx::execute_linear(archive, p) : pmuidx::execute_bitmap(archive, p);
    benchmark::DoNotOptimize(r.rows.data());
  }
  state.SetLabel(q.text);
}

void BM_QueryBitmap(benchmark::State& state) { run_query(state, false); }
void BM_QueryLinear(benchmark::State& state) { run_query(state, true); }
BENCHMARK(BM_QueryBitmap)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_QueryLinear)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);

}  // namespace
