export { CsvError, FieldGrid, parseFieldCsv } from "./csv";
export { Rgb, VIRIDIS, sample, tableIndex } from "./colormap";
export { Channel, IMAGE_SIZE, Rendered, renderChannel } from "./render";
export { PlotResult, loadField, plotField } from "./plot";
export { run } from "./cli";
