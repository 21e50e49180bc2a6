/**
 * Candidate thumbnails: the binary mask alpha-blended over the image so the
 * annotator judges boundary fit, not the mask in isolation.
 */

export interface OverlayOptions {
  /** Blend weight of the highlight color over foreground pixels. */
  alpha?: number;
  /** Highlight color for foreground pixels. */
  color?: [number, number, number];
}

export const OVERLAY_ALPHA = 0.5;
export const OVERLAY_COLOR: [number, number, number] = [235, 64, 52];

/**
 * Blend a mask over an image, both as RGBA pixel buffers of equal length.
 *
 * Foreground is any mask pixel with a nonzero RGB channel (binary masks may
 * store 1 or 255); those pixels become (1-alpha)*image + alpha*color, the
 * rest pass through untouched. Returns a new buffer.
 */
export function blendMaskOverImage(
  image: Uint8ClampedArray,
  mask: Uint8ClampedArray,
  opts: OverlayOptions = {},
): Uint8ClampedArray<ArrayBuffer> {
  if (image.length !== mask.length || image.length % 4 !== 0) {
    throw new Error(`pixel buffers disagree: image ${image.length} vs mask ${mask.length}`);
  }
  const alpha = opts.alpha ?? OVERLAY_ALPHA;
  const [cr, cg, cb] = opts.color ?? OVERLAY_COLOR;
  const out = new Uint8ClampedArray(image.length);
  for (let i = 0; i < image.length; i += 4) {
    const fg = mask[i] > 0 || mask[i + 1] > 0 || mask[i + 2] > 0;
    if (fg) {
      out[i] = Math.round((1 - alpha) * image[i] + alpha * cr);
      out[i + 1] = Math.round((1 - alpha) * image[i + 1] + alpha * cg);
      out[i + 2] = Math.round((1 - alpha) * image[i + 2] + alpha * cb);
    } else {
      out[i] = image[i];
      out[i + 1] = image[i + 1];
      out[i + 2] = image[i + 2];
    }
    out[i + 3] = 255;
  }
  return out;
}

/**
 * Draw image + mask into a canvas at the image's natural resolution.
 * The mask is rasterized to the same size first, so mismatched encodings
 * (e.g. downsampled masks) still line up.
 */
export function renderOverlayThumbnail(
  image: HTMLImageElement,
  mask: HTMLImageElement,
  opts: OverlayOptions = {},
): HTMLCanvasElement {
  const w = image.naturalWidth;
  const h = image.naturalHeight;
  const canvas = document.createElement("canvas");
  canvas.width = w;
  canvas.height = h;
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    throw new Error("2d canvas context unavailable");
  }
  ctx.drawImage(image, 0, 0, w, h);
  const imagePixels = ctx.getImageData(0, 0, w, h);

  const maskCanvas = document.createElement("canvas");
  maskCanvas.width = w;
  maskCanvas.height = h;
  const maskCtx = maskCanvas.getContext("2d");
  if (!maskCtx) {
    throw new Error("2d canvas context unavailable");
  }
  maskCtx.imageSmoothingEnabled = false;
  maskCtx.drawImage(mask, 0, 0, w, h);
  const maskPixels = maskCtx.getImageData(0, 0, w, h);

  const blended = blendMaskOverImage(imagePixels.data, maskPixels.data, opts);
  ctx.putImageData(new ImageData(blended, w, h), 0, 0);
  return canvas;
}
