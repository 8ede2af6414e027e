import { PNG } from "pngjs";

export interface RgbImage {
  width: number;
  height: number;
  /** row-major RGB, 3 bytes per pixel */
  pixels: Uint8Array;
}

export function encodePng(img: RgbImage): Buffer {
  const png = new PNG({ width: img.width, height: img.height });
  for (let i = 0; i < img.width * img.height; i++) {
    png.data[4 * i] = img.pixels[3 * i];
    png.data[4 * i + 1] = img.pixels[3 * i + 1];
    png.data[4 * i + 2] = img.pixels[3 * i + 2];
    png.data[4 * i + 3] = 255;
  }
  return PNG.sync.write(png);
}

export function decodePng(data: Buffer): RgbImage {
  const png = PNG.sync.read(data);
  const pixels = new Uint8Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    pixels[3 * i] = png.data[4 * i];
    pixels[3 * i + 1] = png.data[4 * i + 1];
    pixels[3 * i + 2] = png.data[4 * i + 2];
  }
  return { width: png.width, height: png.height, pixels };
}

/** Map 8-bit RGB to the [-1, 1] float input the image models expect. */
export function normalize(img: RgbImage): Float32Array {
  const out = new Float32Array(img.pixels.length);
  for (let i = 0; i < img.pixels.length; i++) {
    out[i] = img.pixels[i] / 127.5 - 1;
  }
  return out;
}
