/** Downscale the reference image client-side before upload; only its color
 * statistics matter to the style transfer, so 1024px is plenty. */

export const MAX_REFERENCE_SIDE = 1024;

export async function resizeReference(
  file: Blob,
  maxSide: number = MAX_REFERENCE_SIDE,
): Promise<Blob> {
  const bitmap = await createImageBitmap(file);
  const scale = maxSide / Math.max(bitmap.width, bitmap.height);
  if (scale >= 1) {
    bitmap.close();
    return file;
  }
  const w = Math.max(1, Math.round(bitmap.width * scale));
  const h = Math.max(1, Math.round(bitmap.height * scale));
  const canvas = document.createElement("canvas");
  canvas.width = w;
  canvas.height = h;
  const ctx = canvas.getContext("2d");
  if (ctx === null) return file;
  ctx.drawImage(bitmap, 0, 0, w, h);
  bitmap.close();
  return new Promise((resolve) =>
    canvas.toBlob((blob) => resolve(blob ?? file), "image/png"),
  );
}
