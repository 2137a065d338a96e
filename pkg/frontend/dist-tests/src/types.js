/** Wire types mirroring the session service's JSON bodies. */
export {};
