#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "CLI11.hpp"

#include "whmc/config.hpp"
#include "whmc/io.hpp"
#include "whmc/server/session.hpp"
#include "whmc/server/wire.hpp"

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
namespace fs = std::filesystem;

namespace {

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;
  double tick_hz = 0.0;  // 0: 1 / ts of the scenario
  std::string scenario;
  std::string log_dir = "sessions";
};

class Server;

// One operator connection and the live session it drives.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket sock, Server& srv) : ws_(std::move(sock)), timer_(ws_.get_executor()), srv_(srv) {}

  void start(bool reject);
  void on_closed();

 private:
  void read();
  void on_message(const std::string& text);
  void send(const whmc::wire::Message& m);
  void write_next();
  void schedule();
  void on_tick();
  void finish();

  websocket::stream<tcp::socket> ws_;
  asio::steady_timer timer_;
  Server& srv_;
  beast::flat_buffer buf_;
  std::deque<std::string> out_;
  bool writing_ = false;
  bool reject_ = false;
  bool closed_ = false;
  std::optional<whmc::server::Session> session_;
  std::optional<whmc::server::TickScheduler<>> sched_;
};

class Server {
 public:
  Server(asio::io_context& io, ServerConfig cfg, whmc::ScenarioConfig scenario)
      : io_(io), acc_(io), cfg_(std::move(cfg)), scenario_(std::move(scenario)) {
    tcp::endpoint ep(asio::ip::make_address(cfg_.address), cfg_.port);
    acc_.open(ep.protocol());
    acc_.set_option(asio::socket_base::reuse_address(true));
    acc_.bind(ep);
    acc_.listen();
    if (cfg_.tick_hz <= 0.0) cfg_.tick_hz = 1.0 / scenario_.plant.params.ts;
  }

  void accept() {
    acc_.async_accept([this](beast::error_code ec, tcp::socket s) {
      if (!ec) {
        auto c = std::make_shared<Connection>(std::move(s), *this);
        const bool busy = !active_.expired();
        if (!busy) active_ = c;
        c->start(busy);
      }
      accept();
    });
  }

  const ServerConfig& config() const { return cfg_; }
  const whmc::ScenarioConfig& scenario() const { return scenario_; }
  std::string next_id() { return "s" + std::to_string(++sessions_); }

 private:
  asio::io_context& io_;
  tcp::acceptor acc_;
  ServerConfig cfg_;
  whmc::ScenarioConfig scenario_;
  std::weak_ptr<Connection> active_;
  std::uint64_t sessions_ = 0;
};

void Connection::start(bool reject) {
  reject_ = reject;
  ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
    if (ec) return;
    if (self->reject_) {
      self->send(whmc::wire::ErrorMessage{"another operator is connected"});
      return;
    }
    self->session_.emplace(self->srv_.scenario(), self->srv_.next_id());
    self->read();
  });
}

void Connection::read() {
  ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
    if (ec) {
      self->on_closed();
      return;
    }
    const std::string text = beast::buffers_to_string(self->buf_.data());
    self->buf_.consume(self->buf_.size());
    self->on_message(text);
    self->read();
  });
}

void Connection::on_message(const std::string& text) {
  namespace w = whmc::wire;
  w::Message m;
  try {
    m = w::decode(text);
  } catch (const whmc::Error& e) {
    send(w::ErrorMessage{e.what()});
    return;
  }
  if (!session_ || session_->ended()) return;
  if (auto* k = std::get_if<w::KeyPress>(&m)) {
    session_->press(*k);
  } else if (auto* c = std::get_if<w::SessionControl>(&m)) {
    const bool was_running = session_->running();
    session_->control(c->action);
    if (c->action == w::Action::end) {
      timer_.cancel();
      finish();
    } else if (session_->running() && !was_running) {
      sched_.emplace(srv_.config().tick_hz, std::chrono::steady_clock::now());
      schedule();
    } else if (!session_->running()) {
      timer_.cancel();
    }
  } else {
    send(w::ErrorMessage{"only key_press and session_control are accepted from the console"});
  }
}

void Connection::schedule() {
  timer_.expires_at(sched_->next());
  timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
    if (ec || !self->session_ || !self->session_->running()) return;
    self->on_tick();
  });
}

void Connection::on_tick() {
  const std::uint64_t missed = sched_->advance(std::chrono::steady_clock::now());
  // Late wakeups still advance the simulation once per elapsed deadline.
  for (std::uint64_t i = 0; i <= missed; ++i)
    if (auto st = session_->tick()) send(*st);
  schedule();
}

void Connection::finish() {
  auto rep = session_->finalize();
  const fs::path path = fs::path(srv_.config().log_dir) / ("session-" + session_->id() + ".ndjson");
  try {
    whmc::io::atomic_write(path, rep.log);
  } catch (const std::exception& e) {
    rep.report.warnings.push_back(std::string("log not written: ") + e.what());
  }
  send(rep.report);
  std::cerr << "session " << session_->id() << " ended, log " << path.string() << "\n";
}

void Connection::send(const whmc::wire::Message& m) {
  if (closed_) return;
  out_.push_back(whmc::wire::encode(m));
  if (!writing_) write_next();
}

void Connection::write_next() {
  if (out_.empty()) {
    writing_ = false;
    if (reject_) ws_.async_close(websocket::close_code::try_again_later, [self = shared_from_this()](beast::error_code) {});
    return;
  }
  writing_ = true;
  ws_.text(true);
  ws_.async_write(asio::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
    self->out_.pop_front();
    if (ec) {
      self->on_closed();
      return;
    }
    self->write_next();
  });
}

void Connection::on_closed() {
  if (closed_) return;
  closed_ = true;
  timer_.cancel();
  // A dropped connection still leaves a log behind.
  if (session_ && !session_->ended() && session_->t() > 0) finish();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"whmc-expserver: live operator sessions over WebSocket"};
  ServerConfig cfg;
  std::string listen = "127.0.0.1:8765";
  app.add_option("--config", cfg.scenario, "scenario config file")->required();
  app.add_option("--listen", listen, "address:port");
  app.add_option("--tick-hz", cfg.tick_hz, "tick rate (default 1/ts of the scenario)");
  app.add_option("--log-dir", cfg.log_dir, "directory for session logs");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) throw whmc::ConfigError("--listen: expected address:port");
    cfg.address = listen.substr(0, colon);
    cfg.port = static_cast<unsigned short>(std::stoi(listen.substr(colon + 1)));
    auto scenario = whmc::load_config(cfg.scenario);
    asio::io_context io;
    Server srv(io, cfg, scenario);
    srv.accept();
    std::cerr << "listening on " << listen << " at " << srv.config().tick_hz << " ticks/s\n";
    io.run();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
