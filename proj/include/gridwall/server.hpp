#pragma once

// HTTP + WebSocket front for Console. One thread per connection; the
// acceptor runs on its own io_context thread.

#include <atomic>
#include <memory>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "gridwall/console.hpp"

namespace gridwall {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

class Server {
 public:
  Server(std::shared_ptr<Console> console, unsigned short port, const std::string& address = "127.0.0.1")
      : console_(std::move(console)), acceptor_(ioc_, tcp::endpoint(net::ip::make_address(address), port)) {}

  ~Server() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() {
    accept();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  /// Blocks until SIGINT/SIGTERM or stop().
  void run() {
    net::signal_set signals(ioc_, SIGINT, SIGTERM);
    signals.async_wait([this](beast::error_code, int) {
      stopping_->store(true);
      ioc_.stop();
    });
    accept();
    ioc_.run();
  }

  void stop() {
    stopping_->store(true);
    ioc_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  void accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (!ec) {
        std::thread(&Server::session, console_, stopping_, std::move(socket)).detach();
      }
      if (!stopping_->load()) accept();
    });
  }

  static void session(std::shared_ptr<Console> console, std::shared_ptr<std::atomic<bool>> stopping, tcp::socket socket) {
    beast::error_code ec;
    beast::flat_buffer buffer;
    for (;;) {
      http::request<http::string_body> req;
      http::read(socket, buffer, req, ec);
      if (ec) break;
      if (websocket::is_upgrade(req)) {
        stream(*console, *stopping, std::move(socket), std::move(req));
        return;
      }
      http::response<http::string_body> res;
      res.version(req.version());
      res.set(http::field::access_control_allow_origin, "*");
      if (req.method() == http::verb::options) {
        res.result(http::status::no_content);
        res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
        res.set(http::field::access_control_allow_headers, "Content-Type");
      } else {
        const Response r = console->handle(std::string(req.method_string()), std::string(req.target()), req.body());
        res.result(static_cast<http::status>(r.status));
        res.set(http::field::content_type, r.content_type);
        res.body() = r.body;
      }
      res.keep_alive(req.keep_alive());
      res.prepare_payload();
      http::write(socket, res, ec);
      if (ec || !res.keep_alive()) break;
    }
    socket.shutdown(tcp::socket::shutdown_send, ec);
  }

  /// Pushes every lap frame of a duel, starting from lap 1, until the race ends.
  static void stream(Console& console, const std::atomic<bool>& stopping, tcp::socket socket,
                     http::request<http::string_body> req) {
    websocket::stream<tcp::socket> ws(std::move(socket));
    beast::error_code ec;
    const std::string target(req.target());
    const std::string prefix = "/duels/";
    const std::string suffix = "/stream";
    std::shared_ptr<DuelSession> s;
    if (target.starts_with(prefix) && target.ends_with(suffix) && target.size() > prefix.size() + suffix.size()) {
      try {
        s = console.session(target.substr(prefix.size(), target.size() - prefix.size() - suffix.size()));
      } catch (const NotFoundError&) {
      }
    }
    if (!s) {
      http::response<http::string_body> res{http::status::not_found, req.version()};
      res.set(http::field::content_type, "application/json");
      res.body() = json{{"error", "not_found"}, {"message", "no duel stream at " + target}}.dump();
      res.prepare_payload();
      http::write(ws.next_layer(), res, ec);
      return;
    }
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    std::size_t cursor = 0;
    while (!stopping.load()) {
      // Client frames are only control traffic; reading them answers a close handshake.
      if (ws.next_layer().available(ec) > 0) {
        beast::flat_buffer in;
        ws.read(in, ec);
        if (ec) return;
      }
      for (const auto& frame : s->frames_since(cursor, std::chrono::milliseconds(200))) {
        ws.write(net::buffer(frame), ec);
        if (ec) return;
        ++cursor;
      }
      if (s->done() && s->frames_since(cursor, std::chrono::milliseconds(0)).empty()) break;
    }
    ws.close(websocket::close_code::normal, ec);
  }

  std::shared_ptr<Console> console_;
  net::io_context ioc_{1};
  tcp::acceptor acceptor_;
  std::thread thread_;
  std::shared_ptr<std::atomic<bool>> stopping_ = std::make_shared<std::atomic<bool>>(false);
};

}  // namespace gridwall
