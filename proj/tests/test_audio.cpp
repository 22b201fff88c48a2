#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "spliceguard/audio.hpp"
#include "spliceguard/rng.hpp"

using namespace spliceguard;

namespace {

void put16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}
void put32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}

// Hand-assembled WAV image, independent of encode_wav.
std::vector<unsigned char> wav_image(std::uint16_t format, std::uint16_t channels, std::uint16_t bits,
                                     const std::vector<unsigned char>& payload, bool extra_chunk = false) {
  std::vector<unsigned char> b{'R', 'I', 'F', 'F'};
  put32(b, 0);
  for (char c : std::string("WAVEfmt ")) b.push_back(c);
  put32(b, 16);
  put16(b, format);
  put16(b, channels);
  put32(b, 16000);
  put32(b, 16000 * channels * bits / 8);
  put16(b, channels * bits / 8);
  put16(b, bits);
  if (extra_chunk) {
    for (char c : std::string("LIST")) b.push_back(c);
    put32(b, 3);
    b.insert(b.end(), {'a', 'b', 'c', 0});  // odd length plus pad byte
  }
  for (char c : std::string("data")) b.push_back(c);
  put32(b, static_cast<std::uint32_t>(payload.size()));
  b.insert(b.end(), payload.begin(), payload.end());
  const auto riff = static_cast<std::uint32_t>(b.size() - 8);
  std::memcpy(b.data() + 4, &riff, 4);
  return b;
}

std::vector<unsigned char> pcm16_payload(const std::vector<std::int16_t>& v) {
  std::vector<unsigned char> p;
  for (auto s : v) put16(p, static_cast<std::uint16_t>(s));
  return p;
}

}  // namespace

TEST(Wav, Pcm16Scaling) {
  const auto w = decode_wav(wav_image(1, 1, 16, pcm16_payload({0, 16384, -16384})));
  EXPECT_EQ(w.samples, (std::vector<float>{0.0f, 0.5f, -0.5f}));
  EXPECT_EQ(w.sample_rate, 16000);
}

TEST(Wav, ZeroLengthData) {
  const auto w = decode_wav(wav_image(1, 1, 16, {}));
  EXPECT_EQ(w.size(), 0u);
}

TEST(Wav, SkipsUnknownChunks) {
  const auto w = decode_wav(wav_image(1, 1, 16, pcm16_payload({8192}), true));
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w.samples[0], 0.25f);
}

TEST(Wav, StereoIsAveraged) {
  const auto w = decode_wav(wav_image(1, 2, 16, pcm16_payload({16384, 0, -16384, -16384})));
  EXPECT_EQ(w.samples, (std::vector<float>{0.25f, -0.5f}));
}

TEST(Wav, Float32) {
  std::vector<unsigned char> p;
  for (float f : {0.125f, -0.75f}) {
    unsigned char raw[4];
    std::memcpy(raw, &f, 4);
    p.insert(p.end(), raw, raw + 4);
  }
  const auto w = decode_wav(wav_image(3, 1, 32, p));
  EXPECT_EQ(w.samples, (std::vector<float>{0.125f, -0.75f}));
}

TEST(Wav, UnsupportedCodec) {
  try {
    decode_wav(wav_image(1, 1, 24, {0, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unsupported);
  }
  try {
    decode_wav(wav_image(6, 1, 8, {0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unsupported);
  }
}

TEST(Wav, EveryTruncationErrorsWithoutCrashing) {
  const auto full = wav_image(1, 1, 16, pcm16_payload({1, 2, 3, 4}));
  for (std::size_t len = 0; len < full.size(); ++len) {
    std::vector<unsigned char> cut(full.begin(), full.begin() + len);
    try {
      decode_wav(cut);
      ADD_FAILURE() << "accepted truncated image of " << len << " bytes";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::format);
    }
  }
  EXPECT_THROW(decode_wav({'R', 'I', 'F', 'X', 0, 0, 0, 0, 'W', 'A', 'V', 'E'}), Error);
}

TEST(Wav, WriteSingleZeroAndClamp) {
  Waveform w{{0.0f, 1.5f, -2.0f, 1.0f}, 16000};
  const auto img = encode_wav(w);
  ASSERT_EQ(img.size(), 44u + 8u);
  auto s16 = [&](int i) { return static_cast<std::int16_t>(img[44 + 2 * i] | (img[45 + 2 * i] << 8)); };
  EXPECT_EQ(s16(0), 0);
  EXPECT_EQ(s16(1), 32767);
  EXPECT_EQ(s16(2), -32768);
  EXPECT_EQ(s16(3), 32767);
}

TEST(Wav, RandomRoundTripWithinOneLsb) {
  Rng rng(3);
  Waveform w;
  for (int i = 0; i < 5000; ++i) w.samples.push_back(static_cast<float>(rng.uniform(-1.0, 1.0)));
  const auto back = decode_wav(encode_wav(w));
  ASSERT_EQ(back.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_LE(std::abs(back.samples[i] - w.samples[i]), 1.0f / 32768.0f);
  // Quantized signals survive a second pass bit-exactly.
  EXPECT_EQ(encode_wav(back), encode_wav(w));
}

TEST(Wav, FileRoundTripAndIoErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "sg_test_audio";
  std::filesystem::create_directories(dir);
  Waveform w{{0.1f, -0.2f, 0.3f}, 8000};
  write_wav(w, dir / "a.wav");
  const auto r = read_wav(dir / "a.wav");
  EXPECT_EQ(r.sample_rate, 8000);
  EXPECT_EQ(r.size(), 3u);
  try {
    read_wav(dir / "missing.wav");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
  EXPECT_THROW(write_wav(w, dir / "no_such_dir" / "x.wav"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Wav, RejectsNonFiniteSamples) {
  Waveform w{{0.0f, std::nanf("")}, 16000};
  EXPECT_THROW(encode_wav(w), Error);
}
