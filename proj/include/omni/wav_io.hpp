// Minimal 16-bit PCM WAV reader/writer, 16 kHz mono only — the one waveform
// format the dataset pipeline speaks.
#pragma once

#include <string>
#include <vector>

namespace omni {

struct Waveform {
    int sample_rate = 16000;
    std::vector<double> samples;  // in [-1, 1]
};

// Quantize to the int16 grid the WAV file will hold. Generation quantizes
// before computing envelopes so disk round trips preserve metrics exactly.
double quantize_sample(double x);

void write_wav(const std::string& path, const Waveform& w);
Waveform read_wav(const std::string& path);

}  // namespace omni
