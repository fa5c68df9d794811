// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include "adws/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "adws/error.hpp"

namespace fs = std::filesystem;

namespace adws {

Image::Image(int w, int h, std::uint8_t fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

Layout parse_layout(std::string_view name) {
  if (name == "mvtec") return Layout::kMvtec;
  if (name == "flat") return Layout::kFlat;
  throw Error(ErrorCode::kInvalidArgument, "unknown layout '" + std::string(name) + "'");
}

namespace {

bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return b.size() >= 8 && std::equal(std::begin(kSig), std::end(kSig), b.begin());
}

bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

// A complete PNG stream carries an IEND chunk; libpng tolerates some
// truncations silently, so check explicitly.
bool png_has_iend(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t kIend[8] = {'I', 'E', 'N', 'D', 0xAE, 0x42, 0x60, 0x82};
  return std::search(b.begin(), b.end(), std::begin(kIend), std::end(kIend)) != b.end();
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) {
  const bool png = is_png(bytes);
  if (!png && !is_jpeg(bytes)) {
    throw Error(ErrorCode::kUnsupportedFormat, "not a PNG or JPEG stream");
  }
  if (png && !png_has_iend(bytes)) {
    throw Error(ErrorCode::kMalformedImage, "truncated PNG stream");
  }
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat decoded;
  try {
    decoded = cv::imdecode(buf, cv::IMREAD_UNCHANGED | cv::IMREAD_IGNORE_ORIENTATION);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::kMalformedImage, e.what());
  }
  if (decoded.empty()) throw Error(ErrorCode::kMalformedImage, "undecodable image stream");

  if (decoded.depth() == CV_16U) {
    cv::Mat eight;
    decoded.convertTo(eight, CV_8U, 1.0 / 257.0);
    decoded = eight;
  } else if (decoded.depth() != CV_8U) {
    throw Error(ErrorCode::kUnsupportedFormat, "unsupported sample depth");
  }

  const int channels = decoded.channels();
  if (channels != 1 && channels != 3 && channels != 4) {
    throw Error(ErrorCode::kUnsupportedFormat, "unsupported channel count " + std::to_string(channels));
  }

  Image img(decoded.cols, decoded.rows);
  for (int y = 0; y < decoded.rows; ++y) {
    const std::uint8_t* row = decoded.ptr<std::uint8_t>(y);
    for (int x = 0; x < decoded.cols; ++x) {
      const std::uint8_t* px = row + static_cast<std::size_t>(x) * channels;
      if (channels == 1) {
        img.at(x, y, 0) = img.at(x, y, 1) = img.at(x, y, 2) = px[0];
      } else {
        // OpenCV hands out BGR(A).
        img.at(x, y, 0) = px[2];
        img.at(x, y, 1) = px[1];
        img.at(x, y, 2) = px[0];
      }
    }
  }
  return img;
}

Image read_image(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      row[3 * x + 0] = img.at(x, y, 2);
      row[3 * x + 1] = img.at(x, y, 1);
      row[3 * x + 2] = img.at(x, y, 0);
    }
  }
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", bgr, out, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw Error(ErrorCode::kIo, "PNG encoding failed");
  }
  return out;
}

void write_png(const fs::path& path, const Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> resize_plane_bilinear(std::span<const float> src, int src_w, int src_h, int dst_w,
                                         int dst_h) {
  std::vector<float> dst(static_cast<std::size_t>(dst_w) * dst_h);
  if (src_w == dst_w && src_h == dst_h) {
    std::copy(src.begin(), src.end(), dst.begin());
    return dst;
  }
  const double sx = static_cast<double>(src_w) / dst_w;
  const double sy = static_cast<double>(src_h) / dst_h;

  // Column taps are shared by every row.
  std::vector<int> x0s(dst_w), x1s(dst_w);
  std::vector<double> fxs(dst_w);
  for (int x = 0; x < dst_w; ++x) {
    const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src_w - 1));
    x0s[x] = static_cast<int>(std::floor(fx));
    x1s[x] = std::min(x0s[x] + 1, src_w - 1);
    fxs[x] = fx - x0s[x];
  }
  for (int y = 0; y < dst_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src_h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - y0;
    const float* r0 = src.data() + static_cast<std::size_t>(y0) * src_w;
    const float* r1 = src.data() + static_cast<std::size_t>(y1) * src_w;
    float* out = dst.data() + static_cast<std::size_t>(y) * dst_w;
    for (int x = 0; x < dst_w; ++x) {
      const double wx = fxs[x];
      const double top = r0[x0s[x]] + wx * (r0[x1s[x]] - r0[x0s[x]]);
      const double bottom = r1[x0s[x]] + wx * (r1[x1s[x]] - r1[x0s[x]]);
      out[x] = static_cast<float>(top + wy * (bottom - top));
    }
  }
  return dst;
}

namespace {

std::vector<float> channel_plane(const Image& img, int c) {
  std::vector<float> plane(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.data[i * 3 + c];
  return plane;
}

}  // namespace

Image resize_bilinear(const Image& img, int dst_w, int dst_h) {
  Image out(dst_w, dst_h);
  for (int c = 0; c < 3; ++c) {
    const auto plane = resize_plane_bilinear(channel_plane(img, c), img.width, img.height, dst_w, dst_h);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      out.data[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(plane[i]), 0L, 255L));
    }
  }
  return out;
}

ImageTensor resize_normalize(const Image& img, const Normalization& norm) {
  const int size = norm.input_size;
  ImageTensor t;
  t.size = size;
  t.data.resize(static_cast<std::size_t>(3) * size * size);
  const std::size_t plane_len = static_cast<std::size_t>(size) * size;
  for (int c = 0; c < 3; ++c) {
    const auto plane = resize_plane_bilinear(channel_plane(img, c), img.width, img.height, size, size);
    const double mean = norm.mean[c];
    const double inv_std = 1.0 / norm.std[c];
    float* out = t.data.data() + c * plane_len;
    for (std::size_t i = 0; i < plane_len; ++i) {
      out[i] = static_cast<float>((plane[i] / 255.0 - mean) * inv_std);
    }
  }
  return t;
}

GrayImage to_grayscale(const Image& img) {
  GrayImage g(img.width, img.height);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const double y = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
    g.data[i] = static_cast<float>(std::clamp(y / 255.0, 0.0, 1.0));
  }
  return g;
}

namespace {

bool is_image_file(const fs::directory_entry& e) {
  if (!e.is_regular_file()) return false;
  const auto name = e.path().filename().string();
  if (name.empty() || name.front() == '.') return false;
  std::string ext = e.path().extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (is_image_file(e)) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::string relative_id(const fs::path& p, const fs::path& root) {
  return p.lexically_relative(root).generic_string();
}

void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kMissingDirectory, dir.string());
}

void add_test_dir(DatasetIndex& idx, const fs::path& dir, Label label, const std::string& defect) {
  if (!fs::is_directory(dir)) return;
  for (const auto& p : list_images(dir)) {
    idx.test_images.push_back({relative_id(p, idx.root), p, label, defect});
  }
}

}  // namespace

DatasetIndex scan_dataset(const fs::path& root, Layout layout) {
  require_dir(root);
  DatasetIndex idx;
  idx.root = root;

  const fs::path train_dir = layout == Layout::kMvtec ? root / "train" / "good" : root / "train";
  require_dir(layout == Layout::kMvtec ? root / "train" : train_dir);
  require_dir(train_dir);
  for (const auto& p : list_images(train_dir)) idx.train_images.push_back({relative_id(p, root), p});
  if (idx.train_images.empty()) throw Error(ErrorCode::kEmptyTrainingSet, train_dir.string());

  if (layout == Layout::kMvtec) {
    const fs::path test_dir = root / "test";
    if (fs::is_directory(test_dir)) {
      std::vector<fs::path> labels;
      for (const auto& e : fs::directory_iterator(test_dir)) {
        if (e.is_directory()) labels.push_back(e.path());
      }
      std::sort(labels.begin(), labels.end());
      for (const auto& dir : labels) {
        const std::string name = dir.filename().string();
        if (name == "good") {
          add_test_dir(idx, dir, Label::kNormal, "");
        } else {
          add_test_dir(idx, dir, Label::kAnomalous, name);
        }
      }
    }
  } else {
    add_test_dir(idx, root / "test_normal", Label::kNormal, "");
    add_test_dir(idx, root / "test_anomalous", Label::kAnomalous, "anomalous");
  }
  return idx;
}

}  // namespace adws
