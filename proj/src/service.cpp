#include "coopmerge/service.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "coopmerge/protocol.hpp"

namespace coopmerge {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace fs = std::filesystem;
using tcp = net::ip::tcp;
using Clock = std::chrono::steady_clock;
using nlohmann::json;

SessionPlan default_session_plan() {
  SessionPlan plan;
  plan.trial_defaults = default_experiment_config();
  return plan;
}

PlannerConfig session_planner_config(const SessionPlan& plan, double alpha) {
  PlannerConfig p = plan.trial_defaults.planner;
  p.alpha = alpha;
  if (plan.deterministic_expansions > 0) {
    p.time_budget = std::numeric_limits<double>::infinity();
    p.max_expansions = plan.deterministic_expansions;
  } else {
    // The robot plans inside the gap between two ticks.
    p.time_budget = plan.tick_period_s - plan.planner_margin_s;
    p.max_expansions = 0;
  }
  return p;
}

namespace {

constexpr const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

Clock::duration seconds(double s) {
  return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(s));
}

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, std::string id, std::uint64_t seed, const ServiceConfig& cfg)
      : ws_(std::move(socket)), id_(std::move(id)), seed_(seed), cfg_(cfg) {}

  ~Session() {
    if (worker_.joinable()) worker_.detach();
  }

  void start() {
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().set_option(tcp::no_delay(true), ec);
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) {
        self->mark_closed();
        return;
      }
      self->do_read();
      self->worker_ = std::thread([self] { self->run(); });
    });
  }

  void abort() {
    mark_closed();
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      beast::error_code ec;
      beast::get_lowest_layer(self->ws_).socket().close(ec);
    });
  }

  void join() {
    if (worker_.joinable()) worker_.join();
  }

 private:
  // --- network side, runs on the stream's executor -------------------------

  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->mark_closed();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->handle(text);
      self->do_read();
    });
  }

  void handle(const std::string& text) {
    try {
      const protocol::ClientMessage msg = protocol::parse_client_message(text);
      if (const auto* a = std::get_if<protocol::ActionMessage>(&msg)) {
        mailbox_->latch(a->action);
        return;
      }
      const auto& q = std::get<protocol::QuestionnaireMessage>(msg);
      std::lock_guard lock(mutex_);
      if (last_ended_trial_ < 0) throw protocol::ProtocolError("questionnaire: no trial has ended yet");
      if (q.trial_index && *q.trial_index != last_ended_trial_) {
        throw protocol::ProtocolError("questionnaire: answers must refer to trial " + std::to_string(last_ended_trial_));
      }
      answer_ = q;
      cv_.notify_all();
    } catch (const protocol::ProtocolError& e) {
      enqueue(protocol::error(e.what()).dump());
    }
  }

  void enqueue(std::string text) {
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) do_write();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->queue_.clear();
        self->mark_closed();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) {
        self->do_write();
      } else if (self->closing_) {
        self->do_close();
      }
    });
  }

  void do_close() {
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
  }

  // --- worker side ----------------------------------------------------------

  void send(const json& j) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = j.dump()]() mutable {
      self->enqueue(std::move(text));
    });
  }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      self->closing_ = true;
      if (self->queue_.empty()) self->do_close();
    });
  }

  void mark_closed() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    cv_.notify_all();
  }

  bool closed() {
    std::lock_guard lock(mutex_);
    return closed_;
  }

  // Sleeps until `t`; false if the session closed meanwhile.
  bool sleep_until(Clock::time_point t) {
    std::unique_lock lock(mutex_);
    return !cv_.wait_until(lock, t, [&] { return closed_; });
  }

  // The client's latest action, read just before the tick deadline.
  class PacedRemote final : public AgentPolicy {
   public:
    PacedRemote(Session& s, Clock::time_point t0) : s_(s), t0_(t0) {}
    Action decide(const WorldState& observed, Side) override {
      const double period = s_.cfg_.plan.tick_period_s;
      const auto deadline = t0_ + seconds(period * static_cast<double>(observed.step + 1)) - std::chrono::milliseconds(2);
      if (!s_.sleep_until(deadline)) throw std::runtime_error("client disconnected");
      return s_.mailbox_->consume().value_or(Action::Stay);
    }

   private:
    Session& s_;
    Clock::time_point t0_;
  };

  class Pacer final : public TrialObserver {
   public:
    Pacer(Session& s, const TrialConfig& cfg, Clock::time_point t0) : s_(s), cfg_(cfg), t0_(t0) {}
    void on_state(std::int64_t tick, const WorldState& state) override {
      if (!s_.sleep_until(t0_ + seconds(s_.cfg_.plan.tick_period_s * static_cast<double>(tick)))) return;
      s_.send(protocol::tick(cfg_, tick, state));
    }

   private:
    Session& s_;
    const TrialConfig& cfg_;
    Clock::time_point t0_;
  };

  void run() {
    try {
      run_trials();
    } catch (const std::exception& e) {
      send(protocol::error(std::string("session failed: ") + e.what()));
    }
    close();
  }

  void run_trials() {
    const SessionPlan& plan = cfg_.plan;
    const fs::path dir = fs::path(cfg_.out_dir) / ("session-" + id_);
    fs::create_directories(dir);
    send(protocol::hello(id_));

    std::mt19937_64 rng(seed_);
    const std::vector<Condition> conditions = plan.grid.conditions();
    std::uniform_int_distribution<std::size_t> pick_condition(0, conditions.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_color(0, std::size(kPalette) - 1);
    const std::size_t total = plan.practice_trials + plan.recorded_trials;
    std::int64_t completed = 0;

    for (std::size_t i = 0; i < total && !closed(); ++i) {
      const bool practice = i < plan.practice_trials;
      const Condition condition = conditions[pick_condition(rng)];
      TrialConfig tc = sample_trial(condition, plan.trial_defaults, rng);
      tc.planner = session_planner_config(plan, condition.alpha);
      tc.human_model.kind = HumanModel::Kind::Remote;
      tc.seed = rng();

      protocol::TrialInfo info;
      info.trial_index = static_cast<std::int64_t>(i);
      info.practice = practice;
      info.road_length = tc.world.road.road_length;
      info.human_start_lane = tc.start_lane_human;
      info.human_goal_lane = tc.world.road.goal_lane_human;
      info.av_indicator_lane = tc.world.road.goal_lane_robot;
      const std::size_t robot_color = pick_color(rng);
      const std::size_t human_color = (robot_color + 1 + pick_color(rng) % (std::size(kPalette) - 1)) % std::size(kPalette);
      info.robot_color = kPalette[robot_color];
      info.human_color = kPalette[human_color];
      send(protocol::trial_start(info));

      mailbox_->clear();
      const Clock::time_point t0 = Clock::now();
      PacedRemote human(*this, t0);
      auto robot = make_robot_policy(tc);
      Pacer pacer(*this, tc, t0);
      TrialResult result = run_trial(tc, human, *robot, &pacer);

      if (!result.log.aborted) {
        const TickRecord& last = result.log.ticks.back();
        if (sleep_until(t0 + seconds(plan.tick_period_s * static_cast<double>(last.tick)))) {
          send(protocol::tick(tc, last.tick, last.state()));
        }
      }
      {
        std::lock_guard lock(mutex_);
        answer_.reset();
        last_ended_trial_ = info.trial_index;
      }
      send(protocol::trial_end(info.trial_index, result.outcome));
      if (!practice) {
        char name[32];
        std::snprintf(name, sizeof name, "trial-%02zu.jsonl", i);
        write_trial_log((dir / name).string(), result.log);
      }
      if (result.log.aborted) break;
      ++completed;

      std::optional<protocol::QuestionnaireMessage> answer;
      {
        std::unique_lock lock(mutex_);
        cv_.wait_until(lock, Clock::now() + seconds(plan.questionnaire_timeout_s),
                       [&] { return closed_ || answer_.has_value(); });
        answer = answer_;
      }
      if (answer) {
        std::ofstream out(dir / "questionnaire.jsonl", std::ios::app | std::ios::binary);
        out << json{{"trial_index", info.trial_index}, {"practice", practice}, {"q1", answer->q1}, {"q2", answer->q2}}.dump()
            << '\n';
      }
    }
    send(protocol::bye(id_, completed));
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;  // executor only
  bool closing_ = false;           // executor only

  const std::string id_;
  const std::uint64_t seed_;
  const ServiceConfig& cfg_;
  std::shared_ptr<ActionMailbox> mailbox_ = std::make_shared<ActionMailbox>();
  std::thread worker_;

  std::mutex mutex_;
  std::condition_variable cv_;
  bool closed_ = false;
  std::int64_t last_ended_trial_ = -1;
  std::optional<protocol::QuestionnaireMessage> answer_;
};

}  // namespace

struct SessionServer::Impl {
  explicit Impl(ServiceConfig c) : cfg(std::move(c)), acceptor(ioc), work(net::make_work_guard(ioc)) {}

  void do_accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        if (!stopping) do_accept();
        return;
      }
      std::shared_ptr<Session> s;
      {
        std::lock_guard lock(mutex);
        const std::uint64_t n = next_session++;
        s = std::make_shared<Session>(std::move(socket), std::to_string(cfg.plan.seed) + "-" + std::to_string(n),
                                      cfg.plan.seed + n, cfg);
        sessions.push_back(s);
      }
      s->start();
      do_accept();
    });
  }

  ServiceConfig cfg;
  net::io_context ioc;
  tcp::acceptor acceptor;
  net::executor_work_guard<net::io_context::executor_type> work;
  std::thread io_thread;
  std::mutex mutex;
  std::condition_variable stopped_cv;
  std::vector<std::shared_ptr<Session>> sessions;
  std::uint64_t next_session = 0;
  std::atomic<bool> stopping{false};
  bool stopped = false;
  bool started = false;
};

SessionServer::SessionServer(ServiceConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

SessionServer::~SessionServer() { stop(); }

std::uint16_t SessionServer::start() {
  validate(impl_->cfg.plan.trial_defaults.world);
  if (impl_->cfg.plan.grid.conditions().empty()) throw std::invalid_argument("serve: empty condition grid");
  if (!(impl_->cfg.plan.tick_period_s > impl_->cfg.plan.planner_margin_s)) {
    throw std::invalid_argument("serve: tick period must exceed the planner margin");
  }
  fs::create_directories(impl_->cfg.out_dir);
  const tcp::endpoint endpoint(net::ip::make_address(impl_->cfg.address), impl_->cfg.port);
  auto& acc = impl_->acceptor;
  acc.open(endpoint.protocol());
  acc.set_option(net::socket_base::reuse_address(true));
  acc.bind(endpoint);
  acc.listen(net::socket_base::max_listen_connections);
  impl_->do_accept();
  impl_->io_thread = std::thread([this] { impl_->ioc.run(); });
  impl_->started = true;
  return acc.local_endpoint().port();
}

void SessionServer::wait() {
  std::unique_lock lock(impl_->mutex);
  impl_->stopped_cv.wait(lock, [&] { return impl_->stopped; });
}

void SessionServer::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  if (impl_->started) {
    net::post(impl_->ioc, [this] {
      beast::error_code ec;
      impl_->acceptor.close(ec);
    });
    std::vector<std::shared_ptr<Session>> sessions;
    {
      std::lock_guard lock(impl_->mutex);
      sessions = impl_->sessions;
    }
    for (auto& s : sessions) s->abort();
    for (auto& s : sessions) s->join();
    impl_->work.reset();
    impl_->ioc.stop();
    if (impl_->io_thread.joinable()) impl_->io_thread.join();
  }
  std::lock_guard lock(impl_->mutex);
  impl_->stopped = true;
  impl_->stopped_cv.notify_all();
}

}  // namespace coopmerge
