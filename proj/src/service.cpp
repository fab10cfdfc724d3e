#include "morphield/service.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <bit>
#include <charconv>
#include <condition_variable>
#include <cstring>
#include <stop_token>
#include <thread>

namespace morphield {

using nlohmann::json;

// ---------------------------------------------------------------------------
// SessionHost

SessionHost::SessionHost(EditSession session, std::filesystem::path save_path)
    : session_(std::move(session)), save_path_(std::move(save_path)) {
  ring_.push_back({session_.revision(), session_.composite()});
}

Snapshot SessionHost::latest() const {
  std::lock_guard lock(mutex_);
  return ring_.back();
}

std::optional<Snapshot> SessionHost::at(std::uint64_t revision) const {
  std::lock_guard lock(mutex_);
  for (const auto& s : ring_)
    if (s.revision == revision) return s;
  return std::nullopt;
}

EditResult SessionHost::apply(const EditCommand& command) {
  EditResult result;
  {
    std::lock_guard lock(mutex_);
    result = session_.apply(command);
    ring_.push_back({session_.revision(), session_.composite()});
    if (ring_.size() > kSnapshotRing) ring_.pop_front();
  }
  std::vector<std::function<void(std::uint64_t)>> callbacks;
  {
    std::lock_guard lock(subscribers_mutex_);
    for (const auto& [token, cb] : subscribers_) callbacks.push_back(cb);
  }
  for (const auto& cb : callbacks) cb(result.revision);
  return result;
}

std::filesystem::path SessionHost::save() {
  std::lock_guard lock(mutex_);
  if (save_path_.empty()) throw SessionError("service has no session path to save to", SessionError::Code::conflict);
  session_.save(save_path_);
  return save_path_;
}

std::uint64_t SessionHost::subscribe(std::function<void(std::uint64_t)> callback) {
  std::lock_guard lock(subscribers_mutex_);
  const auto token = next_token_++;
  subscribers_.emplace(token, std::move(callback));
  return token;
}

void SessionHost::unsubscribe(std::uint64_t token) {
  std::lock_guard lock(subscribers_mutex_);
  subscribers_.erase(token);
}

// ---------------------------------------------------------------------------
// Requests and frames

namespace {

class HttpFailure : public std::runtime_error {
 public:
  HttpFailure(unsigned status, std::string code, const std::string& message)
      : std::runtime_error(message), status(status), code(std::move(code)) {}
  unsigned status;
  std::string code;
};

HttpFailure bad_request(const std::string& message) { return {400, "bad_request", message}; }

template <class T>
void put_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::string_view in, std::size_t& pos) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

int side_field(const json& j, const char* key, int fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_integer()) throw bad_request(std::string(key) + " must be an integer");
  const auto v = it->get<long long>();
  if (v < 1 || v > kMaxFrameSide) throw bad_request(std::string(key) + " must be in [1, 2048]");
  return static_cast<int>(v);
}

}  // namespace

RenderRequest parse_render_request(const json& j) {
  if (!j.is_object()) throw bad_request("render request must be a JSON object");
  RenderRequest r;
  try {
    if (auto cam = j.find("camera"); cam != j.end()) {
      if (!cam->is_object()) throw bad_request("camera must be an object");
      if (cam->contains("position")) r.params.camera.position = vec3_from_json(cam->at("position"));
      if (cam->contains("look_at")) r.params.camera.look_at = vec3_from_json(cam->at("look_at"));
      if (cam->contains("up")) r.params.camera.up = vec3_from_json(cam->at("up"));
      if (cam->contains("fov")) {
        if (!cam->at("fov").is_number()) throw bad_request("fov must be a number");
        r.params.camera.fov_degrees = cam->at("fov").get<double>();
      }
    }
  } catch (const SessionError& e) {
    throw bad_request(e.what());
  }
  r.params.width = side_field(j, "width", r.params.width);
  r.params.height = side_field(j, "height", r.params.height);
  if (auto f = j.find("format"); f != j.end()) {
    if (!f->is_string()) throw bad_request("format must be a string");
    const auto name = f->get<std::string>();
    if (name == "png") r.format = FrameFormat::png;
    else if (name == "rgba") r.format = FrameFormat::rgba;
    else if (name == "depth") r.format = FrameFormat::depth;
    else throw bad_request("format must be png, rgba or depth");
  }
  if (auto rev = j.find("revision"); rev != j.end() && !rev->is_null()) {
    if (!rev->is_number_unsigned()) throw bad_request("revision must be a non-negative integer");
    r.revision = rev->get<std::uint64_t>();
  }
  if (auto d = j.find("depth"); d != j.end()) {
    if (!d->is_boolean()) throw bad_request("depth must be a boolean");
    r.with_depth = d->get<bool>();
  }
  try {
    r.params.validate();
  } catch (const std::invalid_argument& e) {
    throw bad_request(e.what());
  }
  return r;
}

std::string encode_frame(const RenderedFrame& frame, std::uint64_t revision, bool with_depth) {
  std::string out;
  const std::size_t pixels = static_cast<std::size_t>(frame.width) * frame.height;
  out.reserve(kFrameHeaderSize + 4 * pixels + (with_depth ? 4 * pixels : 0));
  out.append("MFRM", 4);
  put_le<std::uint32_t>(out, kFrameVersion);
  put_le<std::uint64_t>(out, revision);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(frame.width));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(frame.height));
  put_le<double>(out, frame.milliseconds);
  put_le<std::uint32_t>(out, with_depth ? 1u : 0u);
  out.append(reinterpret_cast<const char*>(frame.rgba.data()), frame.rgba.size());
  if (with_depth)
    for (float d : frame.depth) put_le<float>(out, d);
  return out;
}

FrameHeader decode_frame_header(std::string_view bytes) {
  if (bytes.size() < kFrameHeaderSize || bytes.substr(0, 4) != "MFRM") throw ServiceError("not a frame");
  std::size_t pos = 4;
  FrameHeader h;
  h.version = get_le<std::uint32_t>(bytes, pos);
  h.revision = get_le<std::uint64_t>(bytes, pos);
  h.width = get_le<std::uint32_t>(bytes, pos);
  h.height = get_le<std::uint32_t>(bytes, pos);
  h.milliseconds = get_le<double>(bytes, pos);
  h.flags = get_le<std::uint32_t>(bytes, pos);
  return h;
}

// ---------------------------------------------------------------------------
// Routing

namespace {

struct Target {
  std::string path;
  std::map<std::string, std::string> query;
};

Target split_target(std::string_view target) {
  Target t;
  const auto q = target.find('?');
  t.path = std::string(target.substr(0, q));
  if (q == std::string_view::npos) return t;
  std::string_view rest = target.substr(q + 1);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    const auto pair = rest.substr(0, amp);
    const auto eq = pair.find('=');
    t.query[std::string(pair.substr(0, eq))] = eq == std::string_view::npos ? "" : std::string(pair.substr(eq + 1));
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
  return t;
}

template <class T>
T parse_integer(std::string_view text, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw bad_request(std::string(what) + " must be an integer");
  return value;
}

json parse_body(std::string_view body) {
  if (body.empty()) return json::object();
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw bad_request(std::string("body is not valid JSON: ") + e.what());
  }
}

HttpReply json_reply(unsigned status, const json& j) {
  HttpReply r;
  r.status = status;
  r.body = j.dump();
  return r;
}

Snapshot pick_snapshot(SessionHost& host, const std::optional<std::uint64_t>& revision) {
  if (!revision) return host.latest();
  auto s = host.at(*revision);
  if (!s) throw HttpFailure(410, "revision_gone", "revision " + std::to_string(*revision) + " is no longer available");
  return *s;
}

json edit_reply(SessionHost& host, const EditResult& result) {
  json j = {{"revision", result.revision}, {"changed", to_json(result.changed)}};
  if (result.id) {
    j["id"] = *result.id;
    host.read([&](const EditSession& s) {
      for (const auto& d : s.deformers())
        if (d.id == *result.id) j["deformer"] = to_json(d);
      return 0;
    });
  }
  return j;
}

json deformers_reply(const EditSession& s) {
  json list = json::array();
  for (const auto& d : s.deformers()) {
    json j = to_json(d);
    if (d.saddle) {
      const auto& cp = s.saddles()[*d.saddle];
      j["saddle_value"] = cp.value;
      j["flip_beta"] = flip_threshold(cp.value);
    }
    j["value_at_anchor"] = s.composite()->value(d.anchor);
    list.push_back(std::move(j));
  }
  return {{"revision", s.revision()}, {"deformers", std::move(list)}};
}

json meta_reply(const EditSession& s) {
  json j = s.envelope("");
  for (const char* key : {"criticals", "saddles", "deformers", "coefficients"}) j.erase(key);
  j["api"] = "v1";
  j["grid"]["spacing"] = s.spec().spacing();
  j["saddle_count"] = s.saddles().size();
  j["deformer_count"] = s.deformers().size();
  j["history_depth"] = s.history_size();
  j["history_limit"] = kHistoryDepth;
  j["frame_header_bytes"] = kFrameHeaderSize;
  return j;
}

EditCommand add_command(const json& body) {
  if (body.contains("op")) {
    auto cmd = parse_command(body);
    if (!std::holds_alternative<AddTopology>(cmd) && !std::holds_alternative<AddGeometry>(cmd))
      throw bad_request("POST /v1/deformers takes add_topology or add_geometry");
    return cmd;
  }
  json with_op = body;
  if (body.contains("saddle")) with_op["op"] = "add_topology";
  else if (body.contains("point")) with_op["op"] = "add_geometry";
  else throw bad_request("expected a saddle index or a surface point");
  return parse_command(with_op);
}

HttpReply route(SessionHost& host, std::string_view method, const Target& t, std::string_view body) {
  const std::string& p = t.path;
  if (p == "/v1/meta" && method == "GET") return json_reply(200, host.read(meta_reply));
  if (p == "/v1/saddles" && method == "GET")
    return json_reply(200, host.read([](const EditSession& s) { return s.saddles_json(); }));
  if (p == "/v1/deformers" && method == "GET") return json_reply(200, host.read(deformers_reply));
  if (p == "/v1/deformers" && method == "POST") {
    const auto result = host.apply(add_command(parse_body(body)));
    return json_reply(201, edit_reply(host, result));
  }
  if (p.starts_with("/v1/deformers/")) {
    const auto id = parse_integer<std::uint64_t>(std::string_view(p).substr(14), "deformer id");
    if (method == "PATCH") {
      json j = parse_body(body);
      if (!j.is_object()) throw bad_request("body must be a JSON object");
      j["op"] = "retune";
      j["id"] = id;
      return json_reply(200, edit_reply(host, host.apply(parse_command(j))));
    }
    if (method == "DELETE") return json_reply(200, edit_reply(host, host.apply(Remove{id})));
    throw HttpFailure(405, "method_not_allowed", "use PATCH or DELETE on a deformer");
  }
  if (p == "/v1/undo" && method == "POST") return json_reply(200, edit_reply(host, host.apply(Undo{})));
  if (p == "/v1/render" && method == "POST") {
    const RenderRequest req = parse_render_request(parse_body(body));
    const Snapshot snap = pick_snapshot(host, req.revision);
    const RenderedFrame frame = render(*snap.field, req.params);
    HttpReply r;
    switch (req.format) {
      case FrameFormat::png:
        r.content_type = "image/png";
        {
          const auto png = encode_png(frame.width, frame.height, frame.rgba);
          r.body.assign(png.begin(), png.end());
        }
        break;
      case FrameFormat::rgba:
        r.content_type = "application/octet-stream";
        r.body.assign(frame.rgba.begin(), frame.rgba.end());
        break;
      case FrameFormat::depth:
        r.content_type = "application/octet-stream";
        for (float d : frame.depth) put_le<float>(r.body, d);
        break;
    }
    r.headers = {{"X-Revision", std::to_string(snap.revision)},
                 {"X-Frame-Ms", std::to_string(frame.milliseconds)},
                 {"X-Width", std::to_string(frame.width)},
                 {"X-Height", std::to_string(frame.height)}};
    return r;
  }
  if (p == "/v1/pick" && method == "POST") {
    const json j = parse_body(body);
    const RenderRequest req = parse_render_request(j);
    if (!j.contains("x") || !j.contains("y") || !j["x"].is_number_integer() || !j["y"].is_number_integer())
      throw bad_request("pick needs integer pixel coordinates x and y");
    const int x = j["x"].get<int>(), y = j["y"].get<int>();
    if (x < 0 || y < 0 || x >= req.params.width || y >= req.params.height) throw bad_request("pixel outside the frame");
    const Snapshot snap = pick_snapshot(host, req.revision);
    const auto [origin, dir] = camera_ray(req.params, x, y);
    const auto trace = sphere_trace(*snap.field, origin, dir, req.params);
    json out = {{"revision", snap.revision}, {"hit", trace.hit.has_value()}};
    if (trace.hit) {
      const auto s = snap.field->sample(trace.hit->point);
      out["point"] = to_json(trace.hit->point);
      out["distance"] = trace.hit->distance;
      out["value"] = s.value;
      out["normal"] = to_json(Vec3(s.gradient.normalized()));
    }
    return json_reply(200, out);
  }
  if (p == "/v1/export" && method == "GET") {
    int res = 128;
    if (auto it = t.query.find("res"); it != t.query.end()) res = parse_integer<int>(it->second, "res");
    if (res < 8 || res > 512) throw bad_request("res must be in [8, 512]");
    std::optional<std::uint64_t> revision;
    if (auto it = t.query.find("revision"); it != t.query.end())
      revision = parse_integer<std::uint64_t>(it->second, "revision");
    const Snapshot snap = pick_snapshot(host, revision);
    const auto transform = host.read([](const EditSession& s) { return s.transform(); });
    const MeshData mesh = extract_mesh(*snap.field, res);
    HttpReply r;
    r.content_type = "model/obj";
    r.body = to_obj(mesh, &transform);
    r.headers = {{"X-Revision", std::to_string(snap.revision)}};
    return r;
  }
  if (p == "/v1/session/save" && method == "POST") {
    const auto path = host.save();
    return json_reply(200, {{"path", path.string()}, {"revision", host.latest().revision}});
  }
  static const char* kKnown[] = {"/v1/meta", "/v1/saddles", "/v1/deformers", "/v1/undo", "/v1/render",
                                 "/v1/pick", "/v1/export",  "/v1/session/save"};
  for (const char* known : kKnown)
    if (p == known) throw HttpFailure(405, "method_not_allowed", std::string(method) + " is not supported on " + p);
  throw HttpFailure(404, "not_found", "no route for " + p);
}

HttpReply error_reply(unsigned status, const std::string& code, const std::string& message) {
  return json_reply(status, {{"error", {{"code", code}, {"message", message}}}});
}

}  // namespace

HttpReply handle_request(SessionHost& host, std::string_view method, std::string_view target, std::string_view body) {
  try {
    return route(host, method, split_target(target), body);
  } catch (const HttpFailure& e) {
    return error_reply(e.status, e.code, e.what());
  } catch (const SessionError& e) {
    switch (e.code()) {
      case SessionError::Code::not_found: return error_reply(404, "not_found", e.what());
      case SessionError::Code::conflict: return error_reply(409, "conflict", e.what());
      default: return error_reply(400, "bad_request", e.what());
    }
  } catch (const DeformerError& e) {
    return error_reply(422, "invalid_edit", e.what());
  } catch (const std::exception& e) {
    return error_reply(500, "internal", e.what());
  }
}

// ---------------------------------------------------------------------------
// Networking

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

class Service::Impl {
 public:
  Impl(std::shared_ptr<SessionHost> host, ServiceOptions options)
      : host(std::move(host)), options(std::move(options)), workers(std::max<std::size_t>(this->options.render_threads, 1)) {}

  void accept();

  std::shared_ptr<SessionHost> host;
  ServiceOptions options;
  net::thread_pool workers;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::vector<std::thread> io_threads;
  std::mutex state_mutex;
  std::condition_variable stopped_cv;
  bool running = false;
  bool stopped = false;
  bool finished = false;
};

namespace {

class FrameConnection : public std::enable_shared_from_this<FrameConnection> {
 public:
  FrameConnection(tcp::socket&& socket, std::shared_ptr<SessionHost> host, net::thread_pool& workers)
      : ws_(std::move(socket)), host_(std::move(host)), workers_(workers) {}

  ~FrameConnection() {
    if (subscription_) host_->unsubscribe(subscription_);
  }

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&FrameConnection::on_accept, shared_from_this()));
  }

 private:
  struct Outgoing {
    bool binary = true;
    std::string bytes;
  };

  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<FrameConnection> weak = weak_from_this();
    subscription_ = host_->subscribe([weak](std::uint64_t) {
      if (auto self = weak.lock()) net::post(self->ws_.get_executor(), [self] { self->on_revision(); });
    });
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&FrameConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      stop_.request_stop();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    try {
      json j;
      try {
        j = json::parse(text);
      } catch (const json::parse_error& e) {
        throw bad_request(std::string("message is not valid JSON: ") + e.what());
      }
      request_ = parse_render_request(j);
      ++generation_;
      schedule();
    } catch (const HttpFailure& e) {
      send({false, json{{"error", {{"code", e.code}, {"message", e.what()}}}}.dump()});
    }
    do_read();
  }

  void on_revision() {
    if (closed_ || !request_) return;
    ++generation_;
    schedule();
  }

  // Latest wins: a newer request or revision cancels the render in flight,
  // and completed frames that were superseded are dropped.
  void schedule() {
    if (rendering_) {
      stop_.request_stop();
      return;
    }
    if (!request_ || closed_) return;
    rendering_ = true;
    stop_ = std::stop_source();
    const auto generation = generation_;
    const RenderRequest req = *request_;
    net::post(workers_, [self = shared_from_this(), req, generation, token = stop_.get_token()] {
      const Snapshot snap = self->host_->latest();
      auto out = std::make_shared<std::string>();
      const RenderedFrame frame = render(*snap.field, req.params, token);
      const bool cancelled = frame.cancelled;
      if (!cancelled) *out = encode_frame(frame, snap.revision, req.with_depth);
      net::post(self->ws_.get_executor(), [self, out, generation, cancelled] {
        self->on_rendered(std::move(*out), generation, cancelled);
      });
    });
  }

  void on_rendered(std::string bytes, std::uint64_t generation, bool cancelled) {
    rendering_ = false;
    if (closed_) return;
    if (!cancelled && generation == generation_) send({true, std::move(bytes)});
    if (generation != generation_) schedule();
  }

  void send(Outgoing message) {
    if (writing_) {
      // Only the newest frame waits; errors are never dropped behind frames.
      if (pending_ && !pending_->binary && message.binary) return;
      pending_ = std::move(message);
      return;
    }
    writing_ = true;
    out_ = std::move(message);
    ws_.binary(out_.binary);
    ws_.async_write(net::buffer(out_.bytes), beast::bind_front_handler(&FrameConnection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) {
      closed_ = true;
      stop_.request_stop();
      return;
    }
    if (pending_) {
      Outgoing next = std::move(*pending_);
      pending_.reset();
      send(std::move(next));
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<SessionHost> host_;
  net::thread_pool& workers_;
  beast::flat_buffer buffer_;
  std::uint64_t subscription_ = 0;
  std::optional<RenderRequest> request_;
  std::uint64_t generation_ = 0;
  bool rendering_ = false;
  bool writing_ = false;
  bool closed_ = false;
  std::stop_source stop_;
  Outgoing out_;
  std::optional<Outgoing> pending_;
};

std::string_view to_view(beast::string_view v) { return {v.data(), v.size()}; }

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, std::shared_ptr<SessionHost> host, net::thread_pool& workers)
      : stream_(std::move(socket)), host_(std::move(host)), workers_(workers) {}

  void run() { net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpConnection::do_read, shared_from_this())); }

 private:
  void do_read() {
    parser_.emplace();
    parser_->body_limit(4 << 20);
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, *parser_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) return close();
    if (ec) {
      if (ec == http::error::body_limit) {
        HttpReply r = error_reply(413, "too_large", "request body exceeds 4 MiB");
        return write(std::move(r), 11, false);
      }
      return;
    }
    auto req = parser_->release();
    if (websocket::is_upgrade(req)) {
      if (req.target() == "/v1/frames") {
        stream_.expires_never();
        std::make_shared<FrameConnection>(stream_.release_socket(), host_, workers_)->run(std::move(req));
        return;
      }
      return write(error_reply(404, "not_found", "no socket channel at this path"), req.version(), false);
    }
    const unsigned version = req.version();
    const bool keep_alive = req.keep_alive();
    net::post(workers_, [self = shared_from_this(), req = std::move(req), version, keep_alive] {
      auto reply = std::make_shared<HttpReply>(
          handle_request(*self->host_, to_view(req.method_string()), to_view(req.target()), req.body()));
      net::post(self->stream_.get_executor(),
                [self, reply, version, keep_alive] { self->write(std::move(*reply), version, keep_alive); });
    });
  }

  void write(HttpReply reply, unsigned version, bool keep_alive) {
    auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(reply.status), version);
    res->set(http::field::server, "morphield");
    res->set(http::field::content_type, reply.content_type);
    for (const auto& [name, value] : reply.headers) res->set(name, value);
    res->keep_alive(keep_alive);
    res->body() = std::move(reply.body);
    res->prepare_payload();
    const bool close_after = res->need_eof();
    http::async_write(stream_, *res, [self = shared_from_this(), res, close_after](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (close_after) return self->close();
      self->do_read();
    });
  }

  void close() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  std::shared_ptr<SessionHost> host_;
  net::thread_pool& workers_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
};

}  // namespace

void Service::Impl::accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec == net::error::operation_aborted) return;
    } else {
      std::make_shared<HttpConnection>(std::move(socket), host, workers)->run();
    }
    if (acceptor.is_open()) accept();
  });
}

Service::Service(std::shared_ptr<SessionHost> host, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(host), std::move(options))) {}

Service::~Service() { stop(); }

void Service::start() {
  auto& s = *impl_;
  {
    std::lock_guard lock(s.state_mutex);
    if (s.running || s.stopped) throw ServiceError("service already started");
  }
  beast::error_code ec;
  const auto address = net::ip::make_address(s.options.address, ec);
  if (ec) throw ServiceError("bad bind address '" + s.options.address + "'");
  const tcp::endpoint endpoint(address, s.options.port);
  s.acceptor.open(endpoint.protocol(), ec);
  if (!ec) s.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) s.acceptor.bind(endpoint, ec);
  if (!ec) s.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    beast::error_code ignored;
    s.acceptor.close(ignored);
    throw ServiceError("cannot listen on " + s.options.address + ":" + std::to_string(s.options.port) + ": " +
                       ec.message());
  }
  s.accept();
  {
    std::lock_guard lock(s.state_mutex);
    s.running = true;
  }
  for (std::size_t i = 0; i < std::max<std::size_t>(s.options.io_threads, 1); ++i)
    s.io_threads.emplace_back([&s] { s.ioc.run(); });
}

unsigned short Service::port() const { return impl_->acceptor.local_endpoint().port(); }

void Service::stop() {
  auto& s = *impl_;
  {
    std::lock_guard lock(s.state_mutex);
    if (s.stopped) return;
    s.stopped = true;
  }
  net::post(s.ioc, [&s] {
    beast::error_code ec;
    s.acceptor.close(ec);
  });
  s.ioc.stop();
  for (auto& t : s.io_threads)
    if (t.joinable()) t.join();
  s.workers.stop();
  s.workers.join();
  {
    std::lock_guard lock(s.state_mutex);
    s.finished = true;
  }
  s.stopped_cv.notify_all();
}

void Service::wait() {
  auto& s = *impl_;
  std::unique_lock lock(s.state_mutex);
  s.stopped_cv.wait(lock, [&s] { return s.finished; });
}

}  // namespace morphield
