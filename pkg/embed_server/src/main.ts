import { createApp } from "./app";
import { loadConfig } from "./config";

const configPath = process.argv[2] ?? process.env.EMBED_SERVER_CONFIG;
const config = loadConfig(configPath);
const app = createApp(config);

app.listen(config.port, () => {
  const served = config.models.map((m) => `${m.id}(${m.dims})`).join(", ");
  console.log(`embed server on :${config.port} serving ${served}`);
});
