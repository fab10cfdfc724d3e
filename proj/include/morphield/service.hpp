#pragma once

#include "morphield/session.hpp"
#include "morphield/surfacing.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace morphield {

class ServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Snapshot {
  std::uint64_t revision = 0;
  std::shared_ptr<const CompositeField> field;
};

// Thread-safe owner of an EditSession. Edits are serialized; readers take
// immutable snapshots and work without the lock. The last few revisions
// stay addressable so a render can pin the revision it was asked for.
class SessionHost {
 public:
  static constexpr std::size_t kSnapshotRing = 16;

  SessionHost(EditSession session, std::filesystem::path save_path);

  Snapshot latest() const;
  std::optional<Snapshot> at(std::uint64_t revision) const;
  EditResult apply(const EditCommand& command);
  std::filesystem::path save();

  // Runs f(const EditSession&) under the lock.
  template <class F>
  auto read(F&& f) const {
    std::lock_guard lock(mutex_);
    return f(session_);
  }

  // Called with the new revision after every successful edit, outside the
  // lock.
  std::uint64_t subscribe(std::function<void(std::uint64_t)> callback);
  void unsubscribe(std::uint64_t token);

 private:
  mutable std::mutex mutex_;
  EditSession session_;
  std::filesystem::path save_path_;
  std::deque<Snapshot> ring_;
  std::mutex subscribers_mutex_;
  std::map<std::uint64_t, std::function<void(std::uint64_t)>> subscribers_;
  std::uint64_t next_token_ = 1;
};

enum class FrameFormat { png, rgba, depth };

struct RenderRequest {
  RenderParams params;
  FrameFormat format = FrameFormat::png;
  std::optional<std::uint64_t> revision;
  bool with_depth = false;  // frame socket only: append the depth channel
};

inline constexpr int kMaxFrameSide = 2048;

// {"camera": {"position", "look_at", "up", "fov"}, "width", "height",
//  "format", "revision", "depth"}; every field optional.
RenderRequest parse_render_request(const nlohmann::json& j);

// Binary frame: "MFRM", u32 version, u64 revision, u32 width, u32 height,
// f64 render milliseconds, u32 flags (bit 0: depth follows), then RGBA8
// rows and, if flagged, float32 depth. Little-endian.
inline constexpr std::uint32_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 36;
struct FrameHeader {
  std::uint32_t version = kFrameVersion;
  std::uint64_t revision = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  double milliseconds = 0.0;
  std::uint32_t flags = 0;
};
std::string encode_frame(const RenderedFrame& frame, std::uint64_t revision, bool with_depth);
// Throws ServiceError on a short or foreign buffer.
FrameHeader decode_frame_header(std::string_view bytes);

struct HttpReply {
  unsigned status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
};

// Routes one request. Never throws; failures become JSON error replies
// {"error": {"code", "message"}} and leave the session untouched.
HttpReply handle_request(SessionHost& host, std::string_view method, std::string_view target, std::string_view body);

struct ServiceOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::size_t io_threads = 2;
  std::size_t render_threads = 2;
};

// HTTP and the /v1/frames WebSocket on one port.
class Service {
 public:
  Service(std::shared_ptr<SessionHost> host, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and starts serving. Throws ServiceError if the address is busy.
  void start();
  unsigned short port() const;
  void stop();
  // Blocks until stop() is called from another thread or a signal handler.
  void wait();

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace morphield
