#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>
#include <vector>

#include "cpsim/event_queue.hpp"
#include "cpsim/time.hpp"

using namespace cpsim;

TEST_CASE("time arithmetic is checked and exact") {
  CHECK(SimTime::ms(5).ticks() == 5'000'000);
  CHECK(SimTime::sec(5) == SimTime::ns(5'000'000'000));
  CHECK_THROWS_AS(SimTime::max() + SimTime::ns(1), TimeOverflow);
  // serialization: 500 B at 800 kbps and 1.6 Mbps are exact
  CHECK(serialization_time(500, 800'000) == SimTime::ms(5));
  CHECK(serialization_time(500, 1'600'000) == SimTime::ns(2'500'000));
  // report grid: tick k at round(k*1e9/30)
  CHECK(report_tick(0, 30).ticks() == 0);
  CHECK(report_tick(1, 30).ticks() == 33'333'333);
  CHECK(report_tick(3, 30).ticks() == 100'000'000);
  CHECK(report_tick(150, 30) == SimTime::sec(5));
}

TEST_CASE("schedule basics") {
  EventQueue q;
  int fired = 0;
  auto id = q.schedule(SimTime::ns(0), "a", [&](SimTime) { ++fired; });
  CHECK(id == 0);
  CHECK(q.pending() == 1);

  SUBCASE("identical fire times pop in insertion order") {
    std::vector<int> order;
    q.schedule(SimTime::ms(1), "b", [&](SimTime) { order.push_back(1); });
    q.schedule(SimTime::ms(1), "c", [&](SimTime) { order.push_back(2); });
    q.schedule(SimTime::ms(1), "d", [&](SimTime) { order.push_back(3); });
    q.run_until(SimTime::ms(2));
    CHECK(order == std::vector<int>{1, 2, 3});
  }

  SUBCASE("scheduling before the clock is rejected") {
    q.run_until(SimTime::ms(10));
    CHECK_THROWS_AS(q.schedule(SimTime::ms(10) - SimTime::ns(1), "x", [](SimTime) {}),
                    PastEventError);
    // exactly at the clock is fine
    CHECK_NOTHROW(q.schedule(SimTime::ms(10), "y", [](SimTime) {}));
  }
}

TEST_CASE("cancel semantics") {
  EventQueue q;
  bool fired = false;
  auto id = q.schedule(SimTime::ms(100), "timeout", [&](SimTime) { fired = true; });
  CHECK(q.pending() == 1);
  CHECK(q.cancel(id));
  CHECK(q.pending() == 0);
  CHECK_FALSE(q.cancel(id));  // second cancel
  q.run_until(SimTime::ms(200));
  CHECK_FALSE(fired);

  auto id2 = q.schedule(SimTime::ms(300), "t2", [](SimTime) {});
  q.run_until(SimTime::ms(300));
  CHECK_FALSE(q.cancel(id2));  // already fired
}

TEST_CASE("run_until processes the inclusive boundary and tracks stats") {
  EventQueue q;
  SUBCASE("empty queue just advances the clock") {
    auto stats = q.run_until(SimTime::sec(5));
    CHECK(stats.events_fired == 0);
    CHECK(q.now() == SimTime::sec(5));
  }
  SUBCASE("event exactly at t_end fires") {
    bool fired = false;
    q.schedule(SimTime::sec(1), "edge", [&](SimTime t) {
      fired = true;
      CHECK(t == SimTime::sec(1));
    });
    q.run_until(SimTime::sec(1));
    CHECK(fired);
  }
}

TEST_CASE("39 PMUs at 30 Hz for 5 s produce 5850 tick events") {
  EventQueue q;
  const SimTime t_end = SimTime::sec(5);
  std::uint64_t ticks = 0;
  // self-rescheduling periodic emitters, one per PMU
  struct Pmu {
    EventQueue& q;
    SimTime t_end;
    std::uint64_t& count;
    void tick(std::int64_t k) {
      ++count;
      SimTime next = report_tick(k + 1, 30);
      if (next < t_end) q.schedule(next, "pmu.tick", [this, k](SimTime) { tick(k + 1); });
    }
  };
  std::vector<Pmu> pmus(39, Pmu{q, t_end, ticks});
  for (auto& p : pmus) q.schedule(report_tick(0, 30), "pmu.tick", [&p](SimTime) { p.tick(0); });
  auto stats = q.run_until(t_end);
  CHECK(ticks == 5850);  // 39 * 30 * 5
  CHECK(stats.events_fired == 5850);
}

TEST_CASE("conservation: scheduled = fired + cancelled + pending") {
  EventQueue q;
  std::vector<EventId> ids;
  for (int i = 0; i < 100; ++i)
    ids.push_back(q.schedule(SimTime::ms(i), "e", [](SimTime) {}));
  for (int i = 0; i < 100; i += 3) q.cancel(ids[i]);
  q.run_until(SimTime::ms(49));
  const auto& s = q.stats();
  CHECK(s.events_scheduled == s.events_fired + s.events_cancelled + q.pending());
}

TEST_CASE("handler faults carry the offending event") {
  EventQueue q;
  q.schedule(SimTime::ms(3), "boom", [](SimTime) { throw std::runtime_error("bad"); });
  try {
    q.run_until(SimTime::ms(10));
    FAIL("expected HandlerFault");
  } catch (const HandlerFault& f) {
    CHECK(f.fire_at == SimTime::ms(3));
    CHECK(f.event_kind == "boom");
  }
}

TEST_CASE("two identical runs give bit-identical traces") {
  auto run_trace = []() {
    EventQueue q;
    std::ostringstream os;
    q.set_trace_sink([&](SimTime t, std::uint64_t seq, const std::string& kind,
                         const std::string& sum) {
      os << t.ticks() << '\t' << seq << '\t' << kind << '\t' << sum << '\n';
    });
    for (int i = 0; i < 50; ++i) {
      q.schedule(SimTime::ms((i * 7) % 13), "k" + std::to_string(i % 3), [&q, i](SimTime t) {
        if (i % 5 == 0) q.schedule(t + SimTime::ms(2), "child", [](SimTime) {});
      });
    }
    q.run_until(SimTime::ms(40));
    return os.str();
  };
  CHECK(run_trace() == run_trace());
}
