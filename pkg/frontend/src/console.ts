// Remote console: command line with up/down history over POST /cmd.

export class ConsoleHistory {
  private entries: string[] = [];
  private cursor = -1; // -1 means "past the end", editing a fresh line

  push(cmd: string): void {
    this.entries.push(cmd);
    this.cursor = -1;
  }

  up(): string | null {
    if (this.entries.length === 0) return null;
    if (this.cursor === -1) this.cursor = this.entries.length - 1;
    else if (this.cursor > 0) this.cursor--;
    return this.entries[this.cursor];
  }

  down(): string | null {
    if (this.cursor === -1) return null;
    this.cursor++;
    if (this.cursor >= this.entries.length) {
      this.cursor = -1;
      return "";
    }
    return this.entries[this.cursor];
  }
}

export class ConsoleView {
  history = new ConsoleHistory();

  constructor(
    private output: HTMLElement,
    private input: HTMLInputElement,
    private send: (cmd: string) => Promise<string>,
  ) {
    input.addEventListener("keydown", (e) => {
      if (e.key === "Enter") void this.submit();
      else if (e.key === "ArrowUp") {
        const prev = this.history.up();
        if (prev !== null) input.value = prev;
        e.preventDefault();
      } else if (e.key === "ArrowDown") {
        const next = this.history.down();
        if (next !== null) input.value = next;
        e.preventDefault();
      }
    });
  }

  private append(text: string): void {
    const line = document.createElement("pre");
    line.textContent = text;
    this.output.appendChild(line);
    this.output.scrollTop = this.output.scrollHeight;
  }

  async submit(): Promise<void> {
    const cmd = this.input.value.trim();
    if (!cmd) return; // empty input sends nothing
    this.history.push(cmd);
    this.input.value = "";
    this.append(`> ${cmd}`);
    try {
      this.append(await this.send(cmd));
    } catch (err) {
      this.append(`error: ${String(err)}`);
    }
  }
}
