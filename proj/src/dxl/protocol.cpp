#include "cinch/dxl/protocol.hpp"

#include <algorithm>
#include <array>

namespace cinch::dxl {
namespace {

constexpr std::uint16_t kPolynomial = 0x8005;
constexpr std::array<std::uint8_t, 4> kHeader{0xFF, 0xFF, 0xFD, 0x00};

const std::array<std::uint16_t, 256>& crc_table() {
  static const std::array<std::uint16_t, 256> table = [] {
    std::array<std::uint16_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint16_t r = static_cast<std::uint16_t>(i << 8);
      for (int bit = 0; bit < 8; ++bit) {
        r = (r & 0x8000) ? static_cast<std::uint16_t>((r << 1) ^ kPolynomial) : static_cast<std::uint16_t>(r << 1);
      }
      t[i] = r;
    }
    return t;
  }();
  return table;
}

bool is_stuff_trigger(ByteView data, std::size_t i) {
  return i + 2 < data.size() && data[i] == 0xFF && data[i + 1] == 0xFF && data[i + 2] == 0xFD;
}

Bytes frame(std::uint8_t id, std::uint8_t instruction, std::optional<std::uint8_t> error, ByteView params) {
  const Bytes body = stuff(params);
  const std::size_t length = body.size() + (error ? 4 : 3);
  if (length > kMaxLengthField) {
    throw PacketError(PacketError::Kind::PacketTooLong,
                      "framed length " + std::to_string(length) + " exceeds the 16-bit length field");
  }
  Bytes out;
  out.reserve(kHeaderSize + length);
  out.insert(out.end(), kHeader.begin(), kHeader.end());
  out.push_back(id);
  put_le(out, static_cast<std::uint32_t>(length), 2);
  out.push_back(instruction);
  if (error) out.push_back(*error);
  out.insert(out.end(), body.begin(), body.end());
  put_le(out, crc16(out), 2);
  return out;
}

std::size_t find_header(const Bytes& buf, std::size_t from) {
  auto it = std::search(buf.begin() + static_cast<std::ptrdiff_t>(from), buf.end(), kHeader.begin(), kHeader.end());
  return static_cast<std::size_t>(it - buf.begin());
}

// Length of the longest suffix of `buf` that could still become a header.
std::size_t partial_header_suffix(const Bytes& buf) {
  for (std::size_t n = std::min<std::size_t>(kHeader.size() - 1, buf.size()); n > 0; --n) {
    if (std::equal(buf.end() - static_cast<std::ptrdiff_t>(n), buf.end(), kHeader.begin())) return n;
  }
  return 0;
}

}  // namespace

std::optional<Instruction> instruction_from_byte(std::uint8_t b) {
  switch (b) {
    case 0x01: case 0x02: case 0x03: case 0x04: case 0x05: case 0x06: case 0x08:
    case 0x55: case 0x82: case 0x83: case 0x92: case 0x93:
      return static_cast<Instruction>(b);
    default:
      return std::nullopt;
  }
}

std::string_view to_string(Instruction ins) {
  switch (ins) {
    case Instruction::Ping: return "Ping";
    case Instruction::Read: return "Read";
    case Instruction::Write: return "Write";
    case Instruction::RegWrite: return "RegWrite";
    case Instruction::Action: return "Action";
    case Instruction::FactoryReset: return "FactoryReset";
    case Instruction::Reboot: return "Reboot";
    case Instruction::Status: return "Status";
    case Instruction::SyncRead: return "SyncRead";
    case Instruction::SyncWrite: return "SyncWrite";
    case Instruction::BulkRead: return "BulkRead";
    case Instruction::BulkWrite: return "BulkWrite";
  }
  return "?";
}

std::string_view to_string(DecodeError::Kind kind) {
  switch (kind) {
    case DecodeError::Kind::CrcMismatch: return "CrcMismatch";
    case DecodeError::Kind::BadHeader: return "BadHeader";
    case DecodeError::Kind::Truncated: return "Truncated";
  }
  return "?";
}

std::uint16_t crc16(ByteView data, std::uint16_t crc) {
  const auto& table = crc_table();
  for (std::uint8_t b : data) {
    crc = static_cast<std::uint16_t>((crc << 8) ^ table[((crc >> 8) ^ b) & 0xFF]);
  }
  return crc;
}

Bytes stuff(ByteView params) {
  Bytes out;
  out.reserve(params.size() + params.size() / 3);
  std::size_t i = 0;
  while (i < params.size()) {
    if (is_stuff_trigger(params, i)) {
      out.insert(out.end(), {0xFF, 0xFF, 0xFD, 0xFD});
      i += 3;
    } else {
      out.push_back(params[i++]);
    }
  }
  return out;
}

Bytes unstuff(ByteView stuffed) {
  Bytes out;
  out.reserve(stuffed.size());
  std::size_t i = 0;
  while (i < stuffed.size()) {
    if (is_stuff_trigger(stuffed, i) && i + 3 < stuffed.size() && stuffed[i + 3] == 0xFD) {
      out.insert(out.end(), {0xFF, 0xFF, 0xFD});
      i += 4;
    } else {
      out.push_back(stuffed[i++]);
    }
  }
  return out;
}

Bytes encode(const InstructionPacket& packet) {
  if (packet.id > kMaxDeviceId && packet.id != kBroadcastId) {
    throw PacketError(PacketError::Kind::InvalidId, "invalid bus id " + std::to_string(packet.id));
  }
  return frame(packet.id, static_cast<std::uint8_t>(packet.instruction), std::nullopt, packet.params);
}

Bytes encode_status(const StatusPacket& packet) {
  if (packet.id > kMaxDeviceId) {
    throw PacketError(PacketError::Kind::InvalidId, "status id must be a device id, got " + std::to_string(packet.id));
  }
  if (packet.result_code() > 7) {
    throw PacketError(PacketError::Kind::InvalidError, "status result code out of range");
  }
  return frame(packet.id, static_cast<std::uint8_t>(Instruction::Status), packet.error, packet.params);
}

FrameDecodeResult decode_frames(DecoderState& state, ByteView chunk) {
  FrameDecodeResult result;
  auto report = [&](DecodeError::Kind kind, std::string detail) {
    result.errors.push_back({kind, std::move(detail)});
    state.resyncing = true;
  };

  Bytes& buf = state.buffer;
  std::size_t consumed_chunk = 0;
  while (true) {
    // Never let the buffer exceed its cap: admit input in bounded slices.
    if (consumed_chunk < chunk.size()) {
      const std::size_t room = state.cap > buf.size() ? state.cap - buf.size() : 0;
      const std::size_t take = std::min(room, chunk.size() - consumed_chunk);
      buf.insert(buf.end(), chunk.begin() + static_cast<std::ptrdiff_t>(consumed_chunk),
                 chunk.begin() + static_cast<std::ptrdiff_t>(consumed_chunk + take));
      consumed_chunk += take;
    }

    std::size_t pos = 0;
    while (true) {
      const std::size_t h = find_header(buf, pos);
      if (h == buf.size()) {
        const std::size_t keep = partial_header_suffix(buf);
        if (buf.size() - keep > pos && !state.resyncing) {
          report(DecodeError::Kind::BadHeader, std::to_string(buf.size() - keep - pos) + " bytes without a header");
        }
        pos = buf.size() - keep;
        state.sync = DecoderState::Sync::Searching;
        break;
      }
      if (h > pos && !state.resyncing) {
        report(DecodeError::Kind::BadHeader, std::to_string(h - pos) + " bytes skipped before header");
      }
      pos = h;
      state.sync = DecoderState::Sync::InPacket;
      if (buf.size() - pos < kHeaderSize) break;

      const std::size_t length = get_le(buf, pos + 5, 2);
      const std::size_t total = kHeaderSize + length;
      if (length < 3 || total > state.cap) {
        report(DecodeError::Kind::BadHeader, "implausible length field " + std::to_string(length));
        ++pos;
        continue;
      }
      if (buf.size() - pos < total) break;

      const ByteView whole(buf.data() + pos, total);
      const std::uint16_t expected = static_cast<std::uint16_t>(get_le(whole, total - 2, 2));
      if (crc16(whole.first(total - 2)) != expected) {
        report(DecodeError::Kind::CrcMismatch, "frame for id " + std::to_string(whole[4]));
        ++pos;
        continue;
      }
      Frame f;
      f.id = whole[4];
      f.instruction = whole[7];
      f.payload = unstuff(whole.subspan(8, total - 10));
      result.frames.push_back(std::move(f));
      pos += total;
      state.resyncing = false;
      state.sync = DecoderState::Sync::Searching;
    }
    buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(pos));

    if (consumed_chunk >= chunk.size()) break;
    if (buf.size() >= state.cap) {
      // A single partial frame fills the cap: drop it and resync.
      report(DecodeError::Kind::Truncated, "decoder buffer cap reached");
      buf.erase(buf.begin());
    }
  }
  return result;
}

DecodeResult decode_step(DecoderState& state, ByteView chunk) {
  FrameDecodeResult frames = decode_frames(state, chunk);
  DecodeResult out;
  out.errors = std::move(frames.errors);
  for (Frame& f : frames.frames) {
    if (f.instruction != static_cast<std::uint8_t>(Instruction::Status)) {
      out.errors.push_back({DecodeError::Kind::BadHeader, "not a status frame"});
      continue;
    }
    if (f.id == kBroadcastId || f.id > kMaxDeviceId) {
      out.errors.push_back({DecodeError::Kind::BadHeader, "status frame with non-device id"});
      continue;
    }
    if (f.payload.empty()) {
      out.errors.push_back({DecodeError::Kind::BadHeader, "status frame without error byte"});
      continue;
    }
    StatusPacket p;
    p.id = f.id;
    p.error = f.payload.front();
    p.params.assign(f.payload.begin() + 1, f.payload.end());
    out.packets.push_back(std::move(p));
  }
  return out;
}

std::optional<InstructionPacket> to_instruction(const Frame& frame) {
  auto ins = instruction_from_byte(frame.instruction);
  if (!ins || *ins == Instruction::Status) return std::nullopt;
  return InstructionPacket{frame.id, *ins, frame.payload};
}

std::optional<DecodeError> finish(DecoderState& state) {
  const bool had = !state.buffer.empty() && state.sync == DecoderState::Sync::InPacket;
  state.buffer.clear();
  state.sync = DecoderState::Sync::Searching;
  state.resyncing = false;
  if (!had) return std::nullopt;
  return DecodeError{DecodeError::Kind::Truncated, "partial frame dropped"};
}

}  // namespace cinch::dxl
