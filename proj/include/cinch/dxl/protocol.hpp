// Dynamixel Protocol 2.0 framing: CRC, byte stuffing, packet encode and an
// incremental, resynchronising decoder.
//
// Frame layout (all multi-byte fields little-endian):
//
//   FF FF FD 00 | id | len_lo len_hi | instruction | [error] | params... | crc_lo crc_hi
//
// `len` counts everything after itself: instruction, the optional status
// error byte, the stuffed params and the two CRC bytes.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cinch::dxl {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline constexpr std::uint8_t kBroadcastId = 0xFE;
inline constexpr std::uint8_t kMaxDeviceId = 0xFC;
inline constexpr std::size_t kHeaderSize = 7;  // FF FF FD 00 id len_lo len_hi
inline constexpr std::size_t kMaxLengthField = 0xFFFF;
inline constexpr std::size_t kDefaultDecoderCap = 4096;

enum class Instruction : std::uint8_t {
  Ping = 0x01,
  Read = 0x02,
  Write = 0x03,
  RegWrite = 0x04,
  Action = 0x05,
  FactoryReset = 0x06,
  Reboot = 0x08,
  Status = 0x55,
  SyncRead = 0x82,
  SyncWrite = 0x83,
  BulkRead = 0x92,
  BulkWrite = 0x93,
};

std::optional<Instruction> instruction_from_byte(std::uint8_t b);
std::string_view to_string(Instruction ins);

/// Status error byte. Bit 7 is the hardware-alert flag, the low seven bits the
/// result code (0 = ok, 1..7 = failure kinds).
enum class ResultCode : std::uint8_t {
  Ok = 0,
  ResultFail = 1,
  InstructionError = 2,
  CrcError = 3,
  DataRangeError = 4,
  DataLengthError = 5,
  DataLimitError = 6,
  AccessError = 7,
};

inline constexpr std::uint8_t kAlertBit = 0x80;

struct InstructionPacket {
  std::uint8_t id = 1;
  Instruction instruction = Instruction::Ping;
  Bytes params;

  friend bool operator==(const InstructionPacket&, const InstructionPacket&) = default;
};

struct StatusPacket {
  std::uint8_t id = 1;
  std::uint8_t error = 0;
  Bytes params;

  bool alert() const { return (error & kAlertBit) != 0; }
  std::uint8_t result_code() const { return error & 0x7F; }

  friend bool operator==(const StatusPacket&, const StatusPacket&) = default;
};

/// Thrown by the encoders when a packet violates its invariants.
class PacketError : public std::invalid_argument {
 public:
  enum class Kind { PacketTooLong, InvalidId, InvalidError };
  PacketError(Kind kind, const std::string& what) : std::invalid_argument(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Table-driven CRC-16/BUYPASS (poly 0x8005, init 0, no reflection, no xorout).
std::uint16_t crc16(ByteView data, std::uint16_t crc = 0);

Bytes stuff(ByteView params);
Bytes unstuff(ByteView stuffed);

Bytes encode(const InstructionPacket& packet);
Bytes encode_status(const StatusPacket& packet);

// --- Decoding ---------------------------------------------------------------

struct DecodeError {
  enum class Kind { CrcMismatch, BadHeader, Truncated };
  Kind kind;
  std::string detail;
};

std::string_view to_string(DecodeError::Kind kind);

/// A well-formed frame with a valid CRC. `payload` is unstuffed and holds
/// everything between the instruction byte and the CRC.
struct Frame {
  std::uint8_t id = 0;
  std::uint8_t instruction = 0;
  Bytes payload;
};

struct DecoderState {
  enum class Sync { Searching, InPacket };

  Bytes buffer;
  Sync sync = Sync::Searching;
  std::size_t cap = kDefaultDecoderCap;
  // Set after an error so the bytes skipped while resynchronising are not
  // reported a second time.
  bool resyncing = false;
};

struct FrameDecodeResult {
  std::vector<Frame> frames;
  std::vector<DecodeError> errors;
};

struct DecodeResult {
  std::vector<StatusPacket> packets;
  std::vector<DecodeError> errors;
};

/// Feeds `chunk` into the decoder and returns every complete frame. Errors are
/// reported in-band and the decoder resynchronises on the next header.
FrameDecodeResult decode_frames(DecoderState& state, ByteView chunk);

/// Status-only view of decode_frames: frames carrying any other instruction or
/// the broadcast id are reported as BadHeader.
DecodeResult decode_step(DecoderState& state, ByteView chunk);

/// Interprets a frame as an instruction packet (device side).
std::optional<InstructionPacket> to_instruction(const Frame& frame);

/// Drops any partial frame, reporting it as Truncated.
std::optional<DecodeError> finish(DecoderState& state);

// Little-endian helpers shared by the bus layer and the virtual devices.
inline void put_le(Bytes& out, std::uint32_t value, std::size_t width) {
  for (std::size_t i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

inline std::uint32_t get_le(ByteView in, std::size_t offset, std::size_t width) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

}  // namespace cinch::dxl
