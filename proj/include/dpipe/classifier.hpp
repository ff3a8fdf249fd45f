#pragma once

#include "dpipe/ops.hpp"
#include "dpipe/params.hpp"
#include "dpipe/rng.hpp"

namespace dpipe {

/// Small convolutional classifier:
/// conv3x3(16) + ReLU + maxpool2, conv3x3(32) + ReLU + maxpool2, dense(K).
struct ToyClassifier {
    int in_h = 0, in_w = 0, in_c = 0, classes = 0;
    int c1 = 16, c2 = 32;
    Tensor conv1_w, conv1_b; // (3, 3, in_c*c1), (1, 1, c1)
    Tensor conv2_w, conv2_b; // (3, 3, c1*c2),  (1, 1, c2)
    Tensor fc_w, fc_b;       // (K, h/4*w/4*c2, 1), (1, 1, K)

    ParamList params() const;
};

ToyClassifier make_toy_classifier(int h, int w, int c, int classes, Rng rng);

/// Logits for one image on a tape.
Var classifier_forward(Tape& t, const ToyClassifier& clf, const BoundParams& bound, Var img);

/// Pure forward pass: logits as a 1x1xK tensor.
Tensor classify(const ToyClassifier& clf, const Tensor& img);

/// argmax of the logits; first index wins ties.
int predict(const ToyClassifier& clf, const Tensor& img);

} // namespace dpipe
