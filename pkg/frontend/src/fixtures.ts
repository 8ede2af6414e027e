import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";

import { loadBundle, readMetadata, writeBundle } from "./bundleio";
import { decodePng, encodePng, normalize, RgbImage } from "./imageio";
import { Rng } from "./rng";

export interface GoldenCase {
  image: string;
  probabilities: number[];
  argmax: string;
}

export interface FixtureManifest {
  id: string;
  seed: number;
  layer_count: number;
  labels: string[];
  image_size: number;
  cases: GoldenCase[];
}

function seedWeights(model: tf.LayersModel, rng: Rng): void {
  const weights = (model as unknown as { weights: tf.LayerVariable[] }).weights;
  for (const w of weights) {
    const t = w.read();
    const n = t.size;
    let values: Float32Array;
    if (w.originalName.endsWith("moving_variance")) {
      values = rng.floats(n, 0.5, 1.5); // variances must stay positive
    } else if (w.originalName.endsWith("moving_mean")) {
      values = rng.floats(n, -0.5, 0.5);
    } else {
      values = rng.floats(n, -1, 1);
    }
    w.write(tf.tensor(values, t.shape));
  }
}

async function predict(
  model: tf.LayersModel,
  img: RgbImage
): Promise<number[]> {
  const input = tf.tensor4d(normalize(img), [1, img.height, img.width, 3]);
  const out = model.predict(input) as tf.Tensor;
  const data = await out.data();
  return Array.from(data);
}

function round6(values: number[]): number[] {
  return values.map((v) => Math.round(v * 1e6) / 1e6);
}

function caseImages(rng: Rng, size: number): { name: string; img: RgbImage }[] {
  const uniform = new Uint8Array(size * size * 3).fill(127);
  const random = rng.bytes(size * size * 3);
  const gradient = new Uint8Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = 3 * (y * size + x);
      gradient[i] = Math.floor((255 * x) / Math.max(size - 1, 1));
      gradient[i + 1] = Math.floor((255 * y) / Math.max(size - 1, 1));
      gradient[i + 2] = 128;
    }
  }
  return [
    { name: "uniform_gray", img: { width: size, height: size, pixels: uniform } },
    { name: "random_noise", img: { width: size, height: size, pixels: new Uint8Array(random) } },
    { name: "gradient", img: { width: size, height: size, pixels: gradient } },
  ];
}

async function emitFixture(
  outDir: string,
  id: string,
  seed: number,
  model: tf.LayersModel,
  labels: string[],
  imageSize: number,
  layerCount: number,
  images: { name: string; img: RgbImage }[]
): Promise<FixtureManifest> {
  const dir = path.join(outDir, id);
  writeBundle(dir, model, { modelName: `fixture-${id}`, labels, imageSize });
  fs.mkdirSync(path.join(dir, "images"), { recursive: true });

  const cases: GoldenCase[] = [];
  for (const { name, img } of images) {
    const rel = path.join("images", `${name}.png`);
    fs.writeFileSync(path.join(dir, rel), encodePng(img));
    const probs = await predict(model, img);
    const sum = probs.reduce((a, b) => a + b, 0);
    if (Math.abs(sum - 1) > 1e-5) {
      throw new Error(`golden probabilities sum to ${sum}, expected 1`);
    }
    let best = 0;
    for (let i = 1; i < probs.length; i++) if (probs[i] > probs[best]) best = i;
    cases.push({ image: rel, probabilities: round6(probs), argmax: labels[best] });
  }
  const manifest: FixtureManifest = {
    id,
    seed,
    layer_count: layerCount,
    labels,
    image_size: imageSize,
    cases,
  };
  fs.writeFileSync(
    path.join(dir, "golden.json"),
    JSON.stringify(manifest, null, 1)
  );
  return manifest;
}

/** InputLayer(4x4x3) -> Flatten -> Dense(2, softmax). */
export async function genTinyDense(
  outDir: string,
  seed: number
): Promise<FixtureManifest> {
  const labels = ["plastic garbage", "metal"];
  const model = tf.sequential({
    name: "tiny_dense",
    layers: [
      tf.layers.inputLayer({ inputShape: [4, 4, 3], name: "image_input" }),
      tf.layers.flatten({ name: "flatten" }),
      tf.layers.dense({ units: 2, activation: "softmax", name: "head" }),
    ],
  });
  const rng = new Rng(seed);
  seedWeights(model, rng);
  return emitFixture(
    outDir, "tiny_dense", seed, model, labels, 4, 3, caseImages(rng, 4)
  );
}

function miniConvLayers(): tf.layers.Layer[] {
  return [
    tf.layers.zeroPadding2d({ padding: [[1, 1], [1, 1]], name: "pad" }),
    tf.layers.conv2d({
      filters: 4, kernelSize: 3, strides: 2, padding: "valid", name: "conv",
    }),
    tf.layers.batchNormalization({ name: "conv_bn" }),
    tf.layers.reLU({ maxValue: 6, name: "conv_relu6" }),
    tf.layers.depthwiseConv2d({ kernelSize: 3, padding: "same", name: "dwconv" }),
    tf.layers.globalAveragePooling2d({ name: "gap" }),
  ];
}

/**
 * ZeroPad -> Conv2D -> BatchNorm -> ReLU6 -> DepthwiseConv2D -> GlobalAvgPool
 * -> Dense(3, softmax) on an 8x8x3 input, emitted both with the feature
 * extractor nested as a sub-model and fully flattened, sharing weights.
 */
export async function genMiniConv(
  outDir: string,
  seed: number
): Promise<{ nested: FixtureManifest; flat: FixtureManifest }> {
  const labels = ["cardboard", "glass bottle", "organic"];

  const feature = tf.sequential({ name: "feature_extractor" });
  feature.add(tf.layers.inputLayer({ inputShape: [8, 8, 3], name: "feature_input" }));
  for (const layer of miniConvLayers()) feature.add(layer);
  const nestedModel = tf.sequential({ name: "mini_conv_nested" });
  nestedModel.add(tf.layers.inputLayer({ inputShape: [8, 8, 3], name: "image_input" }));
  nestedModel.add(feature);
  nestedModel.add(tf.layers.dense({ units: 3, activation: "softmax", name: "head" }));

  const rng = new Rng(seed);
  seedWeights(nestedModel, rng);

  const flatModel = tf.sequential({ name: "mini_conv_flat" });
  flatModel.add(tf.layers.inputLayer({ inputShape: [8, 8, 3], name: "image_input_flat" }));
  for (const layer of miniConvLayers()) flatModel.add(layer);
  flatModel.add(tf.layers.dense({ units: 3, activation: "softmax", name: "head" }));
  flatModel.setWeights(nestedModel.getWeights());

  const images = caseImages(new Rng(seed), 8);
  const nested = await emitFixture(
    outDir, "mini_conv_nested", seed, nestedModel, labels, 8, 9, images
  );
  const flat = await emitFixture(
    outDir, "mini_conv_flat", seed, flatModel, labels, 8, 8, images
  );
  for (let i = 0; i < nested.cases.length; i++) {
    const a = nested.cases[i].probabilities;
    const b = flat.cases[i].probabilities;
    for (let j = 0; j < a.length; j++) {
      if (Math.abs(a[j] - b[j]) > 1e-6) {
        throw new Error("nested and flattened goldens diverged");
      }
    }
  }
  return { nested, flat };
}

/** Run a locally stored genuine export through the reference runtime. */
export async function genRealExportGolden(
  bundleDir: string,
  imagePaths: string[],
  outFile: string
): Promise<FixtureManifest> {
  if (!fs.existsSync(path.join(bundleDir, "metadata.json"))) {
    throw new Error(`missing metadata.json in ${bundleDir}`);
  }
  const meta = readMetadata(bundleDir);
  const model = await loadBundle(bundleDir);
  const cases: GoldenCase[] = [];
  for (const imgPath of imagePaths) {
    const img = decodePng(fs.readFileSync(imgPath));
    if (img.width !== meta.imageSize || img.height !== meta.imageSize) {
      throw new Error(
        `image ${imgPath} is ${img.width}x${img.height}, expected ${meta.imageSize}`
      );
    }
    const probs = await predict(model, img);
    let best = 0;
    for (let i = 1; i < probs.length; i++) if (probs[i] > probs[best]) best = i;
    cases.push({
      image: imgPath,
      probabilities: round6(probs),
      argmax: meta.labels[best],
    });
  }
  const manifest: FixtureManifest = {
    id: "real_export",
    seed: 0,
    layer_count: 0,
    labels: meta.labels,
    image_size: meta.imageSize,
    cases,
  };
  fs.writeFileSync(outFile, JSON.stringify(manifest, null, 1));
  return manifest;
}
