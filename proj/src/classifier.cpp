#include "dpipe/classifier.hpp"

#include <cmath>

namespace dpipe {

namespace {

Tensor he_conv(int kh, int kw, int in_ch, int out_ch, Rng& rng) {
    Tensor w(kh, kw, in_ch * out_ch);
    const double std_dev = std::sqrt(2.0 / static_cast<double>(kh * kw * in_ch));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data[i] = std_dev * rng.next_gaussian();
    return w;
}

} // namespace

ToyClassifier make_toy_classifier(int h, int w, int c, int classes, Rng rng) {
    if (h % 4 != 0 || w % 4 != 0)
        throw std::invalid_argument("classifier: input dims must be divisible by 4");
    if (classes < 2) throw std::invalid_argument("classifier: need at least 2 classes");
    ToyClassifier clf;
    clf.in_h = h;
    clf.in_w = w;
    clf.in_c = c;
    clf.classes = classes;
    clf.conv1_w = he_conv(3, 3, c, clf.c1, rng);
    clf.conv1_b = Tensor(1, 1, clf.c1);
    clf.conv2_w = he_conv(3, 3, clf.c1, clf.c2, rng);
    clf.conv2_b = Tensor(1, 1, clf.c2);
    const int flat = (h / 4) * (w / 4) * clf.c2;
    clf.fc_w = Tensor(classes, flat, 1);
    const double std_dev = std::sqrt(2.0 / static_cast<double>(flat));
    for (Eigen::Index i = 0; i < clf.fc_w.size(); ++i)
        clf.fc_w.data[i] = std_dev * rng.next_gaussian();
    clf.fc_b = Tensor(1, 1, classes);
    return clf;
}

ParamList ToyClassifier::params() const {
    auto& self = const_cast<ToyClassifier&>(*this);
    return {
        {"clf/conv1_w", &self.conv1_w}, {"clf/conv1_b", &self.conv1_b},
        {"clf/conv2_w", &self.conv2_w}, {"clf/conv2_b", &self.conv2_b},
        {"clf/fc_w", &self.fc_w},       {"clf/fc_b", &self.fc_b},
    };
}

Var classifier_forward(Tape& t, const ToyClassifier& clf, const BoundParams& bound, Var img) {
    const Tensor& x = t.val(img);
    if (x.h != clf.in_h || x.w != clf.in_w || x.c != clf.in_c)
        throw std::invalid_argument("classifier: input shape mismatch, expected " +
                                    std::to_string(clf.in_h) + "x" + std::to_string(clf.in_w) +
                                    "x" + std::to_string(clf.in_c) + ", got " + x.shape_str());
    Var h = conv2d_same(t, img, bound.var("clf/conv1_w"), bound.var("clf/conv1_b"), clf.c1);
    h = maxpool2(t, relu(t, h));
    h = conv2d_same(t, h, bound.var("clf/conv2_w"), bound.var("clf/conv2_b"), clf.c2);
    h = maxpool2(t, relu(t, h));
    h = reshape(t, h, 1, 1, static_cast<int>(t.val(h).size()));
    return pixel_affine(t, h, bound.var("clf/fc_w"), bound.var("clf/fc_b"));
}

Tensor classify(const ToyClassifier& clf, const Tensor& img) {
    Tape t;
    const ParamList params = clf.params(); // must outlive the bound view
    const BoundParams bound = bind_params(t, params, /*trainable=*/false);
    Tensor logits = t.val(classifier_forward(t, clf, bound, t.constant(img)));
    require_finite(logits, "classify output");
    return logits;
}

int predict(const ToyClassifier& clf, const Tensor& img) {
    const Tensor logits = classify(clf, img);
    int best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i)
        if (logits.data[i] > logits.data[best]) best = static_cast<int>(i);
    return best;
}

} // namespace dpipe
