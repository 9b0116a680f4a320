#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace atomnav {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// geometry
class NoDepth : public Error {
 public:
  using Error::Error;
};
class DegenerateCloud : public Error {
 public:
  using Error::Error;
};

// serialization
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t byte_offset)
      : Error(msg + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset(byte_offset) {}
  std::size_t byte_offset;
};

// sequences
class NotASequence : public Error {
 public:
  using Error::Error;
};
class FrameError : public Error {
 public:
  FrameError(const std::string& asset, double t)
      : Error("missing or invalid frame asset '" + asset + "' at t=" +
              std::to_string(t)),
        asset(asset), timestamp(t) {}
  std::string asset;
  double timestamp;
};
class OrderingError : public Error {
 public:
  using Error::Error;
};

// VLM transport
class Transport : public Error {
 public:
  Transport(const std::string& msg, int retries)
      : Error(msg + " (after " + std::to_string(retries) + " retries)"),
        retries(retries) {}
  int retries;
};
class ReplayMiss : public Error {
 public:
  using Error::Error;
};
class OracleMismatch : public Error {
 public:
  using Error::Error;
};

// sign understanding
class UnparseableReply : public Error {
 public:
  explicit UnparseableReply(const std::string& raw)
      : Error("no dict literal found in VLM reply"), raw(raw) {}
  std::string raw;
};

// map building
class InsufficientDepth : public Error {
 public:
  using Error::Error;
};

// rendering
class AmbiguousFrame : public Error {
 public:
  using Error::Error;
};
class EmptyScene : public Error {
 public:
  using Error::Error;
};

// grounding
class NoParsedSigns : public Error {
 public:
  using Error::Error;
};
class NothingToGround : public Error {
 public:
  using Error::Error;
};
class NoSuchStructure : public Error {
 public:
  using Error::Error;
};
class UngroundableReply : public Error {
 public:
  explicit UngroundableReply(const std::string& raw)
      : Error("VLM grounding reply matches no scene element: " + raw),
        raw(raw) {}
  std::string raw;
};
class NotDirectional : public Error {
 public:
  using Error::Error;
};
class ChoiceDepthMissing : public Error {
 public:
  explicit ChoiceDepthMissing(const std::string& answer_id)
      : Error("no valid depth at choice pixel '" + answer_id + "'"),
        answer_id(answer_id) {}
  std::string answer_id;
};

// simulator
class InvalidAgentPose : public Error {
 public:
  using Error::Error;
};
class SceneTooSimple : public Error {
 public:
  using Error::Error;
};

}  // namespace atomnav
