import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";

export interface MetadataOpts {
  modelName: string;
  labels: string[];
  imageSize: number;
}

/** Serialize a layers model plus metadata into the three-file bundle layout. */
export function writeBundle(
  dir: string,
  model: tf.LayersModel,
  meta: MetadataOpts
): void {
  fs.mkdirSync(dir, { recursive: true });

  const topology = model.toJSON(null, false) as object;
  const weights = (model as unknown as { weights: tf.LayerVariable[] }).weights;
  const specs: { name: string; shape: number[]; dtype: string }[] = [];
  const buffers: Buffer[] = [];
  for (const w of weights) {
    const t = w.read();
    specs.push({ name: w.originalName, shape: t.shape.slice(), dtype: "float32" });
    const data = t.dataSync() as Float32Array;
    buffers.push(Buffer.from(data.buffer, data.byteOffset, data.byteLength));
  }
  const modelJson = {
    modelTopology: topology,
    weightsManifest: [{ paths: ["weights.bin"], weights: specs }],
  };
  fs.writeFileSync(path.join(dir, "model.json"), stableJson(modelJson));
  fs.writeFileSync(path.join(dir, "weights.bin"), Buffer.concat(buffers));

  const metadata = {
    tfjsVersion: tf.version.tfjs,
    tmVersion: "2.4.7",
    packageVersion: "0.8.4-dev",
    packageName: "@teachablemachine/image",
    timeStamp: "2022-01-01T00:00:00.000Z",
    userMetadata: {},
    modelName: meta.modelName,
    labels: meta.labels,
    imageSize: meta.imageSize,
  };
  fs.writeFileSync(path.join(dir, "metadata.json"), stableJson(metadata));
}

/** Load a bundle directory back into a tfjs model (the reference runtime). */
export async function loadBundle(dir: string): Promise<tf.LayersModel> {
  const modelJson = JSON.parse(
    fs.readFileSync(path.join(dir, "model.json"), "utf-8")
  );
  const manifest = modelJson.weightsManifest as {
    paths: string[];
    weights: { name: string; shape: number[]; dtype: "float32" }[];
  }[];
  const specs = manifest.flatMap((g) => g.weights);
  const blobs = manifest.flatMap((g) =>
    g.paths.map((p) => fs.readFileSync(path.join(dir, p)))
  );
  const weightData = Buffer.concat(blobs);
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: modelJson.modelTopology,
      weightSpecs: specs,
      weightData: weightData.buffer.slice(
        weightData.byteOffset,
        weightData.byteOffset + weightData.byteLength
      ),
    })
  );
}

export function readMetadata(dir: string): MetadataOpts {
  const doc = JSON.parse(
    fs.readFileSync(path.join(dir, "metadata.json"), "utf-8")
  );
  return { modelName: doc.modelName, labels: doc.labels, imageSize: doc.imageSize };
}

function stableJson(value: object): string {
  return JSON.stringify(value, null, 1);
}
