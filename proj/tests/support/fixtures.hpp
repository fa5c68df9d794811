// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "adws/error.hpp"
#include "adws/ingest.hpp"
#include "adws/rng.hpp"
#include "adws/selection.hpp"
#include "adws/sift.hpp"
#include "adws/synth.hpp"

namespace fixture {

/// Random elliptical blobs of assorted scale and contrast on mid gray.
adws::GrayImage blob_texture(int size, std::uint64_t seed);
/// Independent per-pixel uniform noise, blurred and contrast-stretched.
adws::GrayImage noise_image(int size, std::uint64_t seed);
/// Exact 90 degree clockwise rotation: (x, y) -> (h - 1 - y, x).
adws::GrayImage rotate90(const adws::GrayImage& g);
adws::Image to_rgb(const adws::GrayImage& g);

/// Non-negative unit-norm descriptor with random components.
adws::Descriptor random_descriptor(adws::Rng& rng);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

inline std::filesystem::path data_dir() { return ADWS_TEST_DATA_DIR; }

/// Synthetic corpus on disk with its stub backbone and training dictionary.
struct SynthSetup {
  adws::SynthCorpus corpus;
  adws::Backbone backbone;
  adws::FeatureDictionary dict;
};

/// Corpus under a fresh temp dir `name`; params.out is overridden.
SynthSetup synth_setup(const std::string& name, adws::SynthParams params);

/// Code of the adws::Error thrown by `f`; records a failure if none is thrown.
template <typename F>
adws::ErrorCode error_of(F&& f) {
  try {
    f();
  } catch (const adws::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an adws::Error";
  return adws::ErrorCode::kInvalidArgument;
}

}  // namespace fixture
